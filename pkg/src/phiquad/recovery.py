"""Recover ``E[phi(Q)]`` from quadrangle elements by a grid supremum.

For a density ``Q`` (``E[Q] = 1``) and a non-extended divergence,

    E[phi(Q)] = sup_X inf_{beta > 0} { E[XQ] - R_beta(X) + beta }

because ``sup_beta {R_beta(X) - beta}`` is the optimized certainty
equivalent whose conjugate is ``E[phi(.)]`` on densities. The same value
comes out with the deviation (pairing ``E[X(Q - 1)]``), with the risk
rebuilt as ``min_C C + V_beta(X - C)`` from the regret, and with the
deviation rebuilt as ``min_C E_beta(X - C)`` from the error.

The outer supremum runs over a product grid of atom values with the first
atom pinned at 0 (every route is invariant under shifting ``X``), refined
twice around the best point. The inner infimum over ``beta`` is a
one-dimensional convex problem and is solved to high accuracy. Every
approximation in the chain (a finite grid, a suboptimal ``C`` or ``t``)
can only lower the reported value, so it is a lower bound on the truth.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from phiquad import kernels as K
from phiquad.closed_form import closed_form_quadrangle
from phiquad.divergences import DivergenceSpec
from phiquad.empirical import EmpiricalDistribution
from phiquad.errors import GridExhausted, InputError

ROUTES = ("risk", "deviation", "regret", "error")
MAX_ATOMS = 4
LOG_BETA_LO = math.log(1e-10)
LOG_BETA_HI = math.log(1e3)
_POINTS_PER_AXIS = {1: 161, 2: 41, 3: 17}


@dataclass(frozen=True)
class RecoveryResult:
    value: float
    route: str
    maximizer: np.ndarray
    beta: float
    truth: float
    grid_exhausted: bool
    evaluations: int

    @property
    def relative_error(self) -> float:
        return abs(self.value - self.truth) / max(abs(self.truth), 1e-12)


def divergence_value(spec: DivergenceSpec, Q, probs) -> float:
    """``E[phi(Q)]`` evaluated directly."""
    return float(np.dot(np.asarray(probs, dtype=float), spec.phi(np.asarray(Q, dtype=float))))


def _check(spec: DivergenceSpec, Q, probs):
    if spec.is_extended:
        raise InputError(f"recovery needs a non-extended divergence, got {spec.name}")
    q = np.asarray(Q, dtype=float).ravel()
    n = q.size
    if not 2 <= n <= MAX_ATOMS:
        raise InputError(f"recovery supports 2 to {MAX_ATOMS} atoms, got {n}")
    p = np.full(n, 1.0 / n) if probs is None else np.asarray(probs, dtype=float).ravel()
    if p.shape != (n,) or np.any(p <= 0.0) or abs(p.sum() - 1.0) > 1e-12:
        raise InputError("probs must be positive, sum to one and match Q")
    if abs(float(np.dot(p, q)) - 1.0) > 1e-9:
        raise InputError(f"Q must have E[Q] = 1, got {float(np.dot(p, q))!r}")
    if not math.isfinite(divergence_value(spec, q, p)):
        raise InputError("Q lies outside the domain of phi")
    return q, p


def _inner_closed(spec, x, p, pairing, deviation):
    """``inf_beta beta + pairing - R_beta(x)`` (or ``D_beta``) using the closed-form risk."""
    X = EmpiricalDistribution(x, p)
    shift = float(np.dot(p, x)) if deviation else 0.0

    def h(u):
        beta = math.exp(u)
        return beta + pairing - (closed_form_quadrangle(spec, beta, X).risk - shift)

    res = minimize_scalar(h, bounds=(LOG_BETA_LO, LOG_BETA_HI), method="bounded",
                          options={"xatol": 1e-10, "maxiter": 500})
    best, u = float(res.fun), float(res.x)
    edge = h(LOG_BETA_LO)
    if edge < best:
        best, u = edge, LOG_BETA_LO
    return best, math.exp(u)


def _inner_kernel(spec, x, p, pairing, center, cgrid):
    kind, a, b = spec.kernel_args
    val, beta = K.recovery_inner_regret(kind, a, b, x, p, pairing, LOG_BETA_LO, LOG_BETA_HI, cgrid, center)
    return float(val), float(beta)


def _route_fn(spec, route, q, p, cgrid):
    def fn(x):
        if route == "risk":
            return _inner_closed(spec, x, p, float(np.dot(p, x * q)), False)
        if route == "deviation":
            return _inner_closed(spec, x, p, float(np.dot(p, x * (q - 1.0))), True)
        if route == "regret":
            return _inner_kernel(spec, x, p, float(np.dot(p, x * q)), 0.0, cgrid)
        return _inner_kernel(spec, x, p, float(np.dot(p, x * (q - 1.0))), float(np.dot(p, x)), cgrid)
    return fn


def recover_divergence(spec: DivergenceSpec, Q, probs=None, *, route: str = "risk",
                       half_width: float | None = None, points: int | None = None,
                       refinements: int = 2) -> RecoveryResult:
    """Grid-supremum estimate of ``E[phi(Q)]`` through one quadrangle element.

    Args:
        spec: a non-extended catalog divergence.
        Q: weights over at most four atoms with ``E[Q] = 1``.
        probs: atom probabilities (uniform when omitted).
        route: ``"risk"``, ``"deviation"``, ``"regret"`` or ``"error"``.
        half_width: atoms range over ``[-half_width, half_width]``; defaults
            to 20, widened when ``Q`` is far from 1.
        points: grid points per free atom (161, 41, 17 for 2, 3, 4 atoms).
        refinements: local refinements, each halving the step.

    Warns:
        GridExhausted: if the best point sits on the outer grid boundary.
    """
    if route not in ROUTES:
        raise InputError(f"route must be one of {ROUTES}, got {route!r}")
    q, p = _check(spec, Q, probs)
    n = q.size
    if half_width is None:
        half_width = 20.0 * max(1.0, float(np.max(np.abs(q - 1.0))))
    m = points or _POINTS_PER_AXIS[n - 1]
    axis = np.linspace(-half_width, half_width, m)
    step = axis[1] - axis[0]
    cgrid = np.arange(-half_width - step, half_width + 1.5 * step, step)
    fn = _route_fn(spec, route, q, p, cgrid)

    best_val, best_x, best_beta = -math.inf, None, math.nan
    evals = 0

    def scan(cands):
        nonlocal best_val, best_x, best_beta, evals
        for free in cands:
            x = np.concatenate([[0.0], free])
            val, beta = fn(x)
            evals += 1
            if val > best_val:
                best_val, best_x, best_beta = val, x, beta

    scan(itertools.product(axis, repeat=n - 1))
    for _ in range(refinements):
        step *= 0.5
        local = [best_x[j] + step * np.arange(-2, 3) for j in range(1, n)]
        scan(itertools.product(*[np.clip(ax, -half_width, half_width) for ax in local]))
    exhausted = bool(np.any(np.abs(best_x[1:]) >= half_width - 1e-12))
    truth = divergence_value(spec, q, p)
    if exhausted:
        warnings.warn(GridExhausted(
            f"{route} route for {spec.name}: supremum on the grid boundary |x| = {half_width}; "
            f"value {best_val:.6g} is only a lower bound"), stacklevel=2)
    return RecoveryResult(float(best_val), route, best_x, float(best_beta), truth, exhausted, evals)


def recover_all_routes(spec: DivergenceSpec, Q, probs=None, **kwargs) -> dict[str, RecoveryResult]:
    return {r: recover_divergence(spec, Q, probs, route=r, **kwargs) for r in ROUTES}
