"""Dual representations: worst-case weights over the risk envelope.

The oracles maximize ``E[XQ]`` over ``{Q : E[phi(Q)] <= beta}`` (plus
``E[Q] = 1`` for risk and deviation) directly, as small conic programs. They
share no code with :mod:`phiquad.primal` beyond the catalog, which is the
point: agreement between the two is a real check of strong duality.

Identifiers extracted from a primal solution pick ``Q_i`` from the conjugate
subdifferential at ``X_i/t - C`` (see :mod:`phiquad._selection`).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import NamedTuple

import cvxpy as cp
import numpy as np

from phiquad import kernels as K
from phiquad._selection import select
from phiquad.divergences import DivergenceSpec
from phiquad.empirical import EmpiricalDistribution, as_distribution, expectation
from phiquad.errors import InputError, KinkResolutionError, NonConvergence
from phiquad.primal import check_beta, primal_error, primal_risk
from phiquad.statistic import newton_polish

MAX_ORACLE_ATOMS = 8
_ID_TOL = 1e-6


class DualSolution(NamedTuple):
    value: float
    weights: np.ndarray


@dataclass(frozen=True, eq=False)
class RiskIdentifier:
    """Worst-case weights over atoms, with the quantities the envelope constrains."""

    weights: np.ndarray
    mean_weight: float
    divergence_value: float
    attained_objective: float
    values: np.ndarray
    probs: np.ndarray

    def violations(self, beta: float, spec: DivergenceSpec, target: float | None = None,
                   tol: float = _ID_TOL, mean: bool = True) -> list[str]:
        """Names of the envelope conditions this identifier breaks."""
        out = []
        if mean and abs(self.mean_weight - 1.0) > tol:
            out.append(f"E[Q] = {self.mean_weight!r}")
        if not self.divergence_value <= beta + tol:
            out.append(f"E[phi(Q)] = {self.divergence_value!r} > beta = {beta!r}")
        if target is not None and abs(self.attained_objective - target) > tol:
            out.append(f"E[XQ] = {self.attained_objective!r} vs {target!r}")
        if not spec.is_extended and float(self.weights.min()) < -1e-9:
            out.append(f"negative weight {float(self.weights.min())!r} for a non-extended divergence")
        return out


def make_identifier(spec: DivergenceSpec, X: EmpiricalDistribution, weights) -> RiskIdentifier:
    """Wrap weights, snapping round-off just outside ``dom(phi)`` back onto it."""
    X = as_distribution(X)
    q = np.asarray(weights, dtype=float).copy()
    lo, hi = spec.phi_domain()
    q = np.where((q < lo) & (q >= lo - 1e-9 * (1.0 + abs(lo))), lo, q)
    if math.isfinite(hi):
        q = np.where((q > hi) & (q <= hi + 1e-9 * (1.0 + abs(hi))), hi, q)
    div = float(np.dot(X.probs, spec.phi(q)))
    return RiskIdentifier(q, float(np.dot(X.probs, q)), div, float(np.dot(X.probs, X.values * q)),
                          X.values, X.probs)


def _phi_expr(spec: DivergenceSpec, q: cp.Variable):
    """Elementwise ``phi(q)`` as a convex cvxpy expression plus domain constraints."""
    kind = spec.kind
    if kind == "kl":
        return -cp.entr(q) - q + 1.0, []
    if kind == "tvd":
        return cp.abs(q - 1.0), [q >= 0.0]
    if kind == "tvd_extended":
        return cp.abs(q - 1.0), []
    if kind == "pearson_chi2":
        return cp.square(q - 1.0), [q >= 0.0]
    if kind == "pearson_chi2_extended":
        return cp.square(q - 1.0), []
    if kind == "generalized_chi2_expectile":
        qq = spec.param("q")
        return cp.square(cp.pos(q - 1.0)) / qq + cp.square(cp.neg(q - 1.0)) / (1.0 - qq), []
    _, a, b = spec.kernel_args
    return None, [q >= a, q <= b]


@lru_cache(maxsize=256)
def _problem(spec: DivergenceSpec, n: int, with_mean: bool):
    q = cp.Variable(n)
    w = cp.Parameter(n)
    p = cp.Parameter(n, nonneg=True)
    beta = cp.Parameter(nonneg=True)
    phi, cons = _phi_expr(spec, q)
    if phi is not None:
        cons = cons + [p @ phi <= beta]
    if with_mean:
        cons = cons + [p @ q == 1.0]
    prob = cp.Problem(cp.Maximize(w @ q), cons)
    return prob, q, w, p, beta


def _solve(spec: DivergenceSpec, beta: float, X, with_mean: bool) -> DualSolution:
    X = as_distribution(X)
    beta = check_beta(beta)
    n = len(X)
    if n > MAX_ORACLE_ATOMS:
        raise InputError(f"dual oracle is limited to {MAX_ORACLE_ATOMS} atoms, got {n}")
    if with_mean and X.is_constant:
        return DualSolution(float(X.values[0]), np.ones(n))
    prob, q, w, p, b = _problem(spec, n, with_mean)
    w.value = X.probs * X.values
    p.value = X.probs
    b.value = beta
    try:
        prob.solve(solver=cp.CLARABEL)
    except cp.SolverError as exc:
        raise NonConvergence(f"dual oracle failed for {spec.name}: {exc}") from None
    if prob.status not in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE) or q.value is None:
        raise NonConvergence(f"dual oracle for {spec.name} ended with status {prob.status}")
    weights = np.asarray(q.value, dtype=float)
    return DualSolution(float(np.dot(X.probs * X.values, weights)), weights)


def dual_risk_oracle(spec: DivergenceSpec, beta: float, X) -> DualSolution:
    """``max E[XQ]`` over ``E[Q] = 1, E[phi(Q)] <= beta`` (at most 8 atoms)."""
    return _solve(spec, beta, X, True)


def dual_regret_oracle(spec: DivergenceSpec, beta: float, X) -> DualSolution:
    """``max E[XQ]`` over ``E[phi(Q)] <= beta`` (at most 8 atoms)."""
    return _solve(spec, beta, X, False)


def dual_deviation_oracle(spec: DivergenceSpec, beta: float, X) -> DualSolution:
    X = as_distribution(X)
    sol = dual_risk_oracle(spec, beta, X)
    return DualSolution(sol.value - expectation(X), sol.weights)


def dual_error_oracle(spec: DivergenceSpec, beta: float, X) -> DualSolution:
    X = as_distribution(X)
    sol = dual_regret_oracle(spec, beta, X)
    return DualSolution(sol.value - expectation(X), sol.weights)


def _check(spec, beta, ident, sel, what, mean=True):
    if sel.slack > _ID_TOL:
        raise KinkResolutionError(
            f"{what} for {spec.name}: no subgradient selection meets the envelope constraints "
            f"(mean residual {sel.mean_residual:.3g}, stationarity residual {sel.stationarity_residual:.3g})")
    if not ident.divergence_value <= beta + _ID_TOL:
        raise KinkResolutionError(
            f"{what} for {spec.name}: selected weights have E[phi(Q)] = {ident.divergence_value:.9g} > beta")


def risk_identifier_from_primal(spec: DivergenceSpec, beta: float, X, C: float | None = None,
                                t: float | None = None, *, shift: float | None = None) -> RiskIdentifier:
    """Worst-case weights from the primal optimizers ``(C, t)``.

    ``C`` is on the conjugate scale (argument ``X/t - C``); pass ``shift``
    (``= C*t``) instead when ``t = 0``. With neither, the primal risk is
    solved first. Smooth conjugates get a Newton polish of ``(C, t)`` so the
    envelope constraints hold to round-off.

    Raises:
        KinkResolutionError: if no selection satisfies ``E[Q] = 1`` and
            ``E[phi(Q)] <= beta`` within 1e-6.
    """
    X = as_distribution(X)
    beta = check_beta(beta)
    if X.is_constant:
        return make_identifier(spec, X, np.ones(len(X)))
    if t is None or (shift is None and C is None):
        sol = primal_risk(spec, beta, X)
        s, t = sol.shift, sol.t
    else:
        s = shift if shift is not None else C * t
    x, p = X.values, X.probs
    scale = 1.0 + float(np.max(np.abs(x)))
    if spec.is_smooth and t > 1e-9 * scale:
        s_new, t_new, F, _ = newton_polish(spec, beta, x, p, s, t)
        if np.max(np.abs(F)) < 1e-9:
            s, t = s_new, t_new
    sel = select(spec, beta, x, p, s, t, mean=True)
    ident = make_identifier(spec, X, sel.weights)
    _check(spec, beta, ident, sel, "risk identifier")
    return ident


def _polish_t(spec, beta, x, p, t):
    """Newton on the stationarity equation in ``t`` alone (error identifiers, smooth case)."""
    kind, a, b = spec.kernel_args
    for _ in range(50):
        z = x / t
        f, d, _, d2 = K.conj_parts(kind, a, b, z)
        g = beta + float(np.dot(p, f)) - float(np.dot(p, z * d))
        h = float(np.dot(p, z * z * d2)) / t
        if not (h > 0.0 and math.isfinite(g)):
            break
        t_new = t - g / h
        if t_new <= 0.0:
            break
        if abs(t_new - t) <= 1e-15 * t:
            return t_new
        t = t_new
    return t


def error_identifier_from_primal(spec: DivergenceSpec, beta: float, X, t: float | None = None) -> RiskIdentifier:
    """Worst-case weights for the regret/error at ``X`` from the optimal ``t``.

    No mean constraint is imposed. Where the subdifferential leaves a choice,
    the selection prefers ``E[Q] = 1``, which is attainable when ``X`` has
    been centered at its statistic.
    """
    X = as_distribution(X)
    beta = check_beta(beta)
    x, p = X.values, X.probs
    if t is None:
        t = primal_error(spec, beta, X).t
    scale = 1.0 + float(np.max(np.abs(x)))
    if spec.is_smooth and t > 1e-9 * scale:
        t = _polish_t(spec, beta, x, p, t)
    sel = select(spec, beta, x, p, 0.0, t, mean=False, soft_mean=True)
    ident = make_identifier(spec, X, sel.weights)
    if abs(sel.stationarity_residual) > _ID_TOL or not ident.divergence_value <= beta + _ID_TOL:
        raise KinkResolutionError(
            f"error identifier for {spec.name}: stationarity residual {sel.stationarity_residual:.3g}, "
            f"E[phi(Q)] = {ident.divergence_value:.9g}")
    return ident


def export_identifier_csv(ident: RiskIdentifier, path, columns: np.ndarray | None = None) -> None:
    """Write ``atom_index,value,prob,weight`` rows.

    ``columns`` (``n x k``) replaces the single ``value`` column with
    ``v0, v1, ...`` for multivariate plots.
    """
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        if columns is None:
            w.writerow(["atom_index", "value", "prob", "weight"])
            for i, (v, pr, q) in enumerate(zip(ident.values, ident.probs, ident.weights)):
                w.writerow([i, repr(float(v)), repr(float(pr)), repr(float(q))])
        else:
            cols = np.asarray(columns, dtype=float)
            w.writerow(["atom_index"] + [f"v{j}" for j in range(cols.shape[1])] + ["prob", "weight"])
            for i in range(cols.shape[0]):
                w.writerow([i] + [repr(float(c)) for c in cols[i]]
                           + [repr(float(ident.probs[i])), repr(float(ident.weights[i]))])
