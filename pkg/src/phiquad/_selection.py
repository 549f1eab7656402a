"""Pick one element of the conjugate subdifferential per atom.

Shared by the identifier extraction and the statistic membership test.
Given a primal point ``(s, t)``, every atom gets the interval
``[d-phi*(z), d+phi*(z)]`` with ``z = (x - s)/t``; at ``t = 0`` the
recession subgradients of ``(x - s) -> t phi*((x - s)/t)`` are used
instead. Atoms sharing the same ``z`` share one weight, so the selection
stays monotone in ``z``. The free weights are then fitted to

* ``E[Q] = 1`` (the envelope mean constraint), and
* ``E[zQ] = beta + E[phi*(z)]`` (stationarity in ``t``, only when ``t > 0``)

by a small linear program that minimizes the absolute residuals.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from phiquad import kernels as K

T_ZERO = 1e-11
T_SMALL = 1e-7
Z_SNAP = 1e-7
_HARD = 1e6


@dataclass(frozen=True)
class Selection:
    weights: np.ndarray
    mean_residual: float
    stationarity_residual: float
    t: float
    n_free: int

    @property
    def slack(self) -> float:
        return max(abs(self.mean_residual), abs(self.stationarity_residual))


def _intervals(spec, x, s, t):
    kind, a, b = spec.kernel_args
    scale = 1.0 + float(np.max(np.abs(x)))
    if t > T_ZERO * scale:
        z = (x - s) / t
        for k in spec.kinks():
            near = np.abs(z - k) <= Z_SNAP * (1.0 + abs(k))
            z = np.where(near, k, z)
        f, dm, dp, _ = K.conj_parts(kind, a, b, z)
        return z, f, dm, dp, t
    y = x - s
    y = np.where(np.abs(y) <= 1e-9 * scale, 0.0, y)
    lo, hi = K.phi_domain(kind, a, b)
    dm = np.where(y > 0.0, hi, lo)
    dp = np.where(y < 0.0, lo, hi)
    return y, np.zeros_like(y), dm.astype(float), dp.astype(float), 0.0


def _groups(z: np.ndarray) -> list[np.ndarray]:
    order = np.argsort(z, kind="stable")
    zs = z[order]
    # consecutive sorted values within a relative 1e-12 share a weight
    breaks = np.flatnonzero(np.diff(zs) > 1e-12 * (1.0 + np.abs(zs[:-1]))) + 1
    return np.split(order, breaks)


def _square_solve(A, rhs, free):
    """Exact solution when the free weights are as many as the rows, if it fits the boxes."""
    try:
        theta = np.linalg.solve(A, rhs)
    except np.linalg.LinAlgError:
        return None
    for th, (_, lo, hi) in zip(theta, free):
        tol = 1e-12 * (1.0 + abs(th))
        if not (lo - tol <= th <= hi + tol):
            return None
    return np.clip(theta, [lo for _, lo, _ in free], [hi for _, _, hi in free])


def select(spec, beta: float, x: np.ndarray, p: np.ndarray, s: float, t: float, *,
           mean: bool = True, soft_mean: bool = False) -> Selection:
    """Weights ``Q`` from the subdifferential at ``(s, t)``.

    ``mean`` imposes ``E[Q] = 1`` as a hard row. ``soft_mean`` instead asks
    for it only after the stationarity row is met (used for the error
    identifier, where the mean constraint is not part of the envelope).

    A tiny positive ``t`` from the optimizer is usually ``t = 0`` in
    disguise; then the recession selection is tried too and the one with
    the smaller residual wins.
    """
    sel = _select(spec, beta, x, p, s, t, mean, soft_mean)
    scale = 1.0 + float(np.max(np.abs(x)))
    if sel.t > 0.0 and t <= T_SMALL * scale and sel.slack > 1e-12:
        alt = _select(spec, beta, x, p, s, 0.0, mean, soft_mean)
        if alt.slack < sel.slack:
            return alt
    return sel


def _select(spec, beta, x, p, s, t, mean, soft_mean) -> Selection:
    z, f, dm, dp, t = _intervals(spec, x, s, t)
    groups = _groups(z)
    q = np.empty(x.size)
    free = []
    for g in groups:
        lo, hi = float(dm[g[0]]), float(dp[g[0]])
        if lo == hi:
            q[g] = lo
        else:
            free.append((g, lo, hi))

    rows, rhs, weight = [], [], []
    is_free = np.zeros(x.size, dtype=bool)
    for g, _, _ in free:
        is_free[g] = True
    fixed = np.flatnonzero(~is_free)
    if mean or soft_mean:
        rows.append([float(p[g].sum()) for g, _, _ in free])
        rhs.append(1.0 - float(np.dot(p[fixed], q[fixed])))
        weight.append(_HARD if mean else 1.0)
    if t > 0.0:
        rows.append([float(p[g].sum() * z[g[0]]) for g, _, _ in free])
        rhs.append(beta + float(np.dot(p, f)) - float(np.dot(p[fixed] * z[fixed], q[fixed])))
        weight.append(_HARD)

    if free and rows:
        m, k = len(rows), len(free)
        A = np.asarray(rows)
        theta = _square_solve(A, np.asarray(rhs), free) if m == k else None
        if theta is not None:
            for (g, _, _), th in zip(free, theta):
                q[g] = th
            return _finish(q, p, z, f, beta, t, len(free))
        # variables: theta (k), slack+ (m), slack- (m)
        A_eq = np.hstack([A, np.eye(m), -np.eye(m)])
        c = np.concatenate([np.zeros(k), weight, weight])
        bounds = [(None if lo == -np.inf else lo, None if hi == np.inf else hi) for _, lo, hi in free]
        bounds += [(0.0, None)] * (2 * m)
        res = linprog(c, A_eq=A_eq, b_eq=rhs, bounds=bounds, method="highs")
        if res.status == 0:
            theta = res.x[:k]
        else:
            theta = np.array([_midpoint(lo, hi) for _, lo, hi in free])
        for (g, _, _), th in zip(free, theta):
            q[g] = th
    elif free:
        for g, lo, hi in free:
            q[g] = _midpoint(lo, hi)

    return _finish(q, p, z, f, beta, t, len(free))


def _finish(q, p, z, f, beta, t, n_free) -> Selection:
    mean_res = float(np.dot(p, q)) - 1.0
    stat_res = float(np.dot(p, z * q)) - beta - float(np.dot(p, f)) if t > 0.0 else 0.0
    return Selection(q, mean_res, stat_res, t, n_free)


def _midpoint(lo: float, hi: float) -> float:
    if np.isfinite(lo) and np.isfinite(hi):
        return 0.5 * (lo + hi)
    if np.isfinite(lo):
        return lo
    if np.isfinite(hi):
        return hi
    return 0.0
