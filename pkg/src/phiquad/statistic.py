"""Optimality conditions for the statistic and the optimal ``(C, t)``.

Everything here works on the conjugate scale ``z = (X - s)/t`` with ``s``
on the scale of ``X``; the conjugate-scale shift is ``C = s/t``. With
``d`` and ``d2`` the first two derivatives of ``phi*``, stationarity of
``f(s, t)`` reads

    F1 = E[d(z)] - 1 = 0
    F2 = beta + E[phi*(z)] - E[z d(z)] = 0

and has Jacobian

    dF1/ds = -E[d2]/t       dF1/dt = -E[z d2]/t
    dF2/ds =  E[z d2]/t     dF2/dt =  E[z^2 d2]/t
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from phiquad import kernels as K
from phiquad._selection import select
from phiquad.divergences import DivergenceSpec
from phiquad.empirical import EmpiricalDistribution, as_distribution, var_interval
from phiquad.errors import DegenerateInput, HomogeneityError, NonConvergence, NonsmoothSpecError
from phiquad.primal import check_beta, primal_risk

_RES_TOL = 1e-8


@dataclass(frozen=True)
class CharacterizingSolution:
    C: float
    t: float
    residual_1: float
    residual_2: float
    iterations: int = 0
    method: str = "newton"

    @property
    def statistic(self) -> float:
        """``S = t * C``, the statistic on the scale of ``X``."""
        return self.C * self.t


def _residuals(kind, a, b, x, p, beta, s, t):
    z = (x - s) / t
    f, d, _, d2 = K.conj_parts(kind, a, b, z)
    F1 = float(np.dot(p, d)) - 1.0
    F2 = beta + float(np.dot(p, f)) - float(np.dot(p, z * d))
    J = np.array([
        [-float(np.dot(p, d2)) / t, -float(np.dot(p, z * d2)) / t],
        [float(np.dot(p, z * d2)) / t, float(np.dot(p, z * z * d2)) / t],
    ])
    return np.array([F1, F2]), J


def newton_polish(spec: DivergenceSpec, beta: float, x: np.ndarray, p: np.ndarray,
                  s: float, t: float, max_iter: int = 100, tol: float = 1e-13):
    """Damped Newton on ``(F1, F2) = 0`` from ``(s, t)``.

    Returns ``(s, t, F, iterations)``. Steps are halved (at most 60 times)
    until the residual norm drops; a step that cannot be made to decrease
    ends the iteration.
    """
    kind, a, b = spec.kernel_args
    F, J = _residuals(kind, a, b, x, p, beta, s, t)
    norm = float(np.max(np.abs(F))) if np.all(np.isfinite(F)) else math.inf
    it = 0
    for it in range(1, max_iter + 1):
        if norm <= tol:
            break
        try:
            step = np.linalg.solve(J, -F)
        except np.linalg.LinAlgError:
            break
        if not np.all(np.isfinite(step)):
            break
        lam = 1.0
        improved = False
        for _ in range(60):
            s_new, t_new = s + lam * step[0], t + lam * step[1]
            if t_new > 0.0:
                F_new, J_new = _residuals(kind, a, b, x, p, beta, s_new, t_new)
                n_new = float(np.max(np.abs(F_new)))
                if math.isfinite(n_new) and n_new < norm:
                    s, t, F, J, norm = s_new, t_new, F_new, J_new, n_new
                    improved = True
                    break
            lam *= 0.5
        if not improved:
            break
    return s, t, F, it


def _bisection_fallback(spec, beta, x, p, t0):
    """Solve F1 = 0 in ``s`` for each ``t`` and golden-section ``f(s(t), t)`` over ``t``."""
    kind, a, b = spec.kernel_args
    lo_x, hi_x = float(x.min()), float(x.max())

    def s_of_t(t):
        # E[d((x - s)/t)] is nonincreasing in s
        lo, hi = lo_x - 50.0 * t - 1.0, hi_x + 50.0 * t + 1.0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            val = float(np.dot(p, K.conj_parts(kind, a, b, (x - mid) / t)[1])) - 1.0
            if val > 0.0:
                lo = mid
            else:
                hi = mid
        return 0.5 * (lo + hi)

    def f(t):
        s = s_of_t(t)
        return s + t * beta + t * float(np.dot(p, K.conj_parts(kind, a, b, (x - s) / t)[0]))

    lo, hi = 1e-3 * t0, 10.0 * t0
    inv = 0.6180339887498949
    x1, x2 = hi - inv * (hi - lo), lo + inv * (hi - lo)
    f1, f2 = f(x1), f(x2)
    for _ in range(120):
        if f1 <= f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - inv * (hi - lo)
            f1 = f(x1)
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + inv * (hi - lo)
            f2 = f(x2)
    t = 0.5 * (lo + hi)
    return s_of_t(t), t


def solve_characterizing(spec: DivergenceSpec, beta: float, X: EmpiricalDistribution) -> CharacterizingSolution:
    """Solve the two stationarity equations for a smooth conjugate.

    Starts from the primal optimizers and polishes with damped Newton; falls
    back to bisection in ``C`` nested in a golden-section search over ``t``.

    Raises:
        NonsmoothSpecError: for piecewise-linear conjugates.
        DegenerateInput: for constant ``X``.
        NonConvergence: when the optimum sits at ``t = 0`` (no interior
            solution exists) or the residuals stay above 1e-8.
    """
    if not spec.is_smooth:
        raise NonsmoothSpecError(f"{spec.name} has a piecewise-linear conjugate; use statistic_membership_check")
    X = as_distribution(X)
    beta = check_beta(beta)
    if X.is_constant:
        raise DegenerateInput("characterizing equations need a nonconstant X")
    risk = primal_risk(spec, beta, X)
    scale = 1.0 + float(np.max(np.abs(X.values)))
    if risk.t <= 1e-9 * scale:
        raise NonConvergence(
            f"{spec.name} at beta={beta}: optimum sits at t = 0, the system has no solution with t > 0",
            {"t": risk.t, "risk": risk.value},
        )
    x, p = X.values, X.probs
    s, t, F, it = newton_polish(spec, beta, x, p, risk.shift, risk.t)
    method = "newton"
    if not np.max(np.abs(F)) <= _RES_TOL:
        s, t = _bisection_fallback(spec, beta, x, p, risk.t)
        s, t, F, it2 = newton_polish(spec, beta, x, p, s, t)
        it += it2
        method = "bisection+newton"
    if not np.max(np.abs(F)) <= _RES_TOL:
        raise NonConvergence(f"characterizing system residuals {F.tolist()} above {_RES_TOL}",
                             {"s": s, "t": t, "iterations": it})
    return CharacterizingSolution(float(s / t), float(t), float(F[0]), float(F[1]), it, method)


def optimal_t_given_shift(spec: DivergenceSpec, beta: float, X: EmpiricalDistribution, s: float) -> float:
    """``argmin_t t*beta + E[t phi*((X - s)/t)]``, Newton-polished for smooth conjugates."""
    kind, a, b = spec.kernel_args
    x, p = X.values, X.probs
    _, t = K.minimize_t(kind, a, b, x - s, p, beta)
    if not spec.is_smooth or t <= 0.0:
        return float(t)
    for _ in range(50):
        z = (x - s) / t
        f, d, _, d2 = K.conj_parts(kind, a, b, z)
        g = beta + float(np.dot(p, f)) - float(np.dot(p, z * d))
        h = float(np.dot(p, z * z * d2)) / t
        if not (h > 0.0 and math.isfinite(g)):
            break
        t_new = t - g / h
        if t_new <= 0.0:
            t_new = 0.5 * t
        if abs(t_new - t) <= 1e-15 * t:
            t = t_new
            break
        t = t_new
    return float(t)


def statistic_membership_check(spec: DivergenceSpec, beta: float, X: EmpiricalDistribution,
                               C: float, tol: float = 1e-7) -> bool:
    """Is ``C`` (on the scale of ``X``) in the statistic?

    Finds the best ``t`` for this ``C``, then asks whether some choice of
    one-sided derivatives per atom puts zero in ``(1, beta) + E[subgradient]``.
    The Minkowski sum of the per-atom segments is tested exactly by a linear
    program. A ``C`` within ``tol`` of an atom is moved onto it first. At ``t = 0`` only the equation in ``C`` applies.
    """
    X = as_distribution(X)
    beta = check_beta(beta)
    if X.is_constant:
        return abs(C - X.values[0]) <= tol * (1.0 + abs(C))
    # the subgradient jumps at atoms, so a C within tol of one is read as the atom
    gap = np.abs(X.values - C)
    k = int(np.argmin(gap))
    if gap[k] <= tol * (1.0 + abs(C)):
        C = float(X.values[k])
    t = optimal_t_given_shift(spec, beta, X, float(C))
    sel = select(spec, beta, X.values, X.probs, float(C), t, mean=True)
    return sel.slack <= tol


def homogeneous_statistic(spec: DivergenceSpec, X: EmpiricalDistribution) -> tuple[float, float]:
    """Statistic of a positively homogeneous family, by sorting.

    ``E[d-phi*(X - C)] <= 1 <= E[d+phi*(X - C)]`` is the quantile condition
    at level ``(b - 1)/(b - a)``, so the answer is the quantile interval.

    Raises:
        HomogeneityError: for families that are not positively homogeneous.
    """
    if not spec.is_homogeneous:
        raise HomogeneityError(f"{spec.name} does not have a positively homogeneous conjugate")
    X = as_distribution(X)
    _, a, b = spec.kernel_args
    return var_interval(X, (b - 1.0) / (b - a))
