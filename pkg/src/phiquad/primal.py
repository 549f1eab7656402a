"""Quadrangle elements from their primal (minimization) representations.

All five elements are computed through one jointly convex function

    f(s, t) = s + t*beta + E[t * phi*((X - s) / t)],   t >= 0,

where ``s`` lives on the scale of ``X``. Its minimum over ``(s, t)`` is the
risk, the minimizing ``s`` is the statistic, and dropping ``s`` gives the
regret. The conjugate-scale shift is ``C = s / t``, so that the argument of
``phi*`` reads ``X/t - C``; ``C`` is undefined (reported as ``nan``) when the
optimal ``t`` is zero, which is the generic case for the positively
homogeneous families.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from phiquad import kernels as K
from phiquad.divergences import DivergenceSpec
from phiquad.empirical import EmpiricalDistribution, as_distribution, expectation
from phiquad.errors import InputError, UnboundedError

_FLAT_TOL = 1e-10
_SMOOTH_FLAT_TOL = 1e-13


class RiskSolution(NamedTuple):
    value: float
    C: float
    t: float
    shift: float


class RegretSolution(NamedTuple):
    value: float
    t: float


@dataclass(frozen=True)
class QuadrangleResult:
    """The five quadrangle elements for one ``(spec, beta, X)`` triple.

    ``statistic_interval`` is the full argmin set; ``shift`` is its
    minimizer found by the risk solve and ``optimal_C = shift / optimal_t``.
    ``regret_t`` is the optimal ``t`` of the regret problem at ``X`` itself.
    """

    risk: float
    deviation: float
    regret: float
    error: float
    statistic_interval: tuple[float, float]
    optimal_t: float
    optimal_C: float
    beta: float
    spec_name: str
    shift: float = math.nan
    regret_t: float = math.nan

    @property
    def statistic(self) -> float:
        """Lower end of the statistic interval."""
        return self.statistic_interval[0]

    def as_dict(self) -> dict:
        return {
            "risk": self.risk,
            "deviation": self.deviation,
            "regret": self.regret,
            "error": self.error,
            "statistic_lo": self.statistic_interval[0],
            "statistic_hi": self.statistic_interval[1],
        }


def check_beta(beta: float) -> float:
    beta = float(beta)
    if not (beta > 0.0 and math.isfinite(beta)):
        raise InputError(f"beta must be positive and finite, got {beta}")
    return beta


def _args(spec: DivergenceSpec, beta: float, X):
    X = as_distribution(X)
    kind, a, b = spec.kernel_args
    return X, kind, a, b, check_beta(beta)


def _finite(value: float, what: str, spec: DivergenceSpec, beta: float) -> float:
    if not math.isfinite(value):
        raise UnboundedError(f"{what} for {spec.name} at beta={beta} has no finite value")
    return float(value)


def _to_C(shift: float, t: float) -> float:
    return shift / t if t > 0.0 else math.nan


def primal_risk(spec: DivergenceSpec, beta: float, X: EmpiricalDistribution) -> RiskSolution:
    """``min_{s, t >= 0} f(s, t)`` with its minimizer.

    Raises:
        UnboundedError: if the minimum is not finite.
    """
    X, kind, a, b, beta = _args(spec, beta, X)
    if X.is_constant:
        return RiskSolution(float(X.values[0]), math.nan, 0.0, float(X.values[0]))
    value, s, t = K.minimize_shift(kind, a, b, X.values, X.probs, beta, 0.0)
    value = _finite(value, "risk", spec, beta)
    return RiskSolution(value, _to_C(s, t), float(t), float(s))


def primal_deviation(spec: DivergenceSpec, beta: float, X: EmpiricalDistribution) -> RiskSolution:
    """``min_{s, t} f(s, t) - E[X]``, solved with the mean folded into the objective."""
    X, kind, a, b, beta = _args(spec, beta, X)
    if X.is_constant:
        return RiskSolution(0.0, math.nan, 0.0, float(X.values[0]))
    value, s, t = K.minimize_shift(kind, a, b, X.values, X.probs, beta, expectation(X))
    value = _finite(value, "deviation", spec, beta)
    return RiskSolution(max(value, 0.0), _to_C(s, t), float(t), float(s))


def primal_regret(spec: DivergenceSpec, beta: float, X: EmpiricalDistribution) -> RegretSolution:
    """``min_{t >= 0} t*beta + E[t * phi*(X/t)]``."""
    X, kind, a, b, beta = _args(spec, beta, X)
    value, t = K.minimize_t(kind, a, b, X.values, X.probs, beta)
    return RegretSolution(_finite(value, "regret", spec, beta), float(t))


def primal_error(spec: DivergenceSpec, beta: float, X: EmpiricalDistribution) -> RegretSolution:
    """Regret minus ``E[X]``; never negative."""
    X, kind, a, b, beta = _args(spec, beta, X)
    value, t = K.minimize_t(kind, a, b, X.values, X.probs, beta)
    value = _finite(value, "error", spec, beta) - expectation(X)
    return RegretSolution(max(value, 0.0), float(t))


def certainty_objective(spec: DivergenceSpec, beta: float, X: EmpiricalDistribution, s: float) -> float:
    """``s + V(X - s)``: the function whose argmin is the statistic."""
    X, kind, a, b, beta = _args(spec, beta, X)
    return float(K.shift_objective(kind, a, b, X.values, X.probs, beta, float(s), 0.0)[0])


def _flat_edge(g, s0: float, threshold: float, direction: float, scale: float) -> float:
    """Furthest point from ``s0`` in ``direction`` where ``g`` stays at or below ``threshold``."""
    step = 1e-9 * scale
    inside = s0
    outside = s0 + direction * step
    while g(outside) <= threshold:
        inside = outside
        step *= 2.0
        outside = s0 + direction * step
        if step > 1e3 * scale:
            return outside
    for _ in range(200):
        mid = 0.5 * (inside + outside)
        if mid == inside or mid == outside:
            break
        if g(mid) <= threshold:
            inside = mid
        else:
            outside = mid
    return inside


def primal_statistic(spec: DivergenceSpec, beta: float, X: EmpiricalDistribution,
                     risk: RiskSolution | None = None) -> tuple[float, float]:
    """Argmin interval of ``s + V(X - s)``.

    Piecewise-linear conjugates can have a flat bottom; its ends are found by
    bisection against the minimum plus a relative tolerance of 1e-10. Smooth
    conjugates give a single point unless the objective is exactly flat a
    short way from the minimizer (the non-extended chi-square at
    ``(1 + beta) P(X = ess sup) = 1``), in which case the same search runs
    with a 1e-13 tolerance.
    """
    X, kind, a, b, beta = _args(spec, beta, X)
    if X.is_constant:
        c = float(X.values[0])
        return c, c
    if risk is None:
        risk = primal_risk(spec, beta, X)
    s0 = risk.shift

    def g(s):
        return float(K.shift_objective(kind, a, b, X.values, X.probs, beta, s, 0.0)[0])

    gmin = min(g(s0), risk.value)
    scale = float(X.values.max() - X.values.min())
    if not spec.is_smooth:
        threshold = gmin + _FLAT_TOL * (1.0 + abs(gmin))
        return _flat_edge(g, s0, threshold, -1.0, scale), _flat_edge(g, s0, threshold, 1.0, scale)
    # smooth conjugates are strictly convex in s except on exactly flat stretches
    threshold = gmin + _SMOOTH_FLAT_TOL * (1.0 + abs(gmin))
    probe = 1e-4 * scale
    lo = _flat_edge(g, s0, threshold, -1.0, scale) if g(s0 - probe) <= threshold else s0
    hi = _flat_edge(g, s0, threshold, 1.0, scale) if g(s0 + probe) <= threshold else s0
    return lo, hi


def primal_quadrangle(spec: DivergenceSpec, beta: float, X: EmpiricalDistribution) -> QuadrangleResult:
    """All five elements in one pass.

    Constant ``X`` short-circuits to the values the axioms force, except the
    regret, which is still minimized (it is ``c`` plus the error at ``c``).
    """
    X = as_distribution(X)
    beta = check_beta(beta)
    mean = expectation(X)
    regret = primal_regret(spec, beta, X)
    if X.is_constant:
        c = float(X.values[0])
        return QuadrangleResult(c, 0.0, regret.value, max(regret.value - c, 0.0), (c, c),
                                0.0, math.nan, beta, spec.name, c, regret.t)
    risk = primal_risk(spec, beta, X)
    interval = primal_statistic(spec, beta, X, risk)
    return QuadrangleResult(
        risk=risk.value,
        deviation=max(risk.value - mean, 0.0),
        regret=regret.value,
        error=max(regret.value - mean, 0.0),
        statistic_interval=interval,
        optimal_t=risk.t,
        optimal_C=risk.C,
        beta=beta,
        spec_name=spec.name,
        shift=risk.shift,
        regret_t=regret.t,
    )


def objective_grid(spec: DivergenceSpec, beta: float, X: EmpiricalDistribution,
                   shifts: np.ndarray) -> np.ndarray:
    """``s + V(X - s)`` at each ``s`` in ``shifts`` (plot and test helper)."""
    return np.array([certainty_objective(spec, beta, X, s) for s in np.asarray(shifts, dtype=float)])
