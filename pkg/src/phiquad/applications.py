"""Portfolio, margin classification and regression over any catalog quadrangle.

Every problem here has the form ``min_theta M(A theta + c) + reg(theta)``
where ``M`` is a risk, deviation or error of the induced scalar loss
``Z = A theta + c`` and ``A`` maps decisions to per-sample losses. A
subgradient of ``M`` at ``theta`` is ``A^T (p * G)`` with ``G`` the worst-case
weights (``Q`` for risk, ``Q - 1`` for deviation and error).

Solves run in two phases:

1. projected subgradient descent with step ``c/sqrt(k)`` along normalized
   subgradients and running averaging, stopped when the averaged iterate
   stalls or after 20,000 steps;
2. an ellipsoid-method polish around the phase-1 point (plain bisection in
   one dimension). Its cuts give a certified bound
   ``f(center) - f* <= sqrt(g^T P g)`` which is reported in the diagnostics.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg

from phiquad._selection import select
from phiquad.closed_form import closed_form_quadrangle
from phiquad.divergences import DivergenceSpec, parse_spec
from phiquad.dual import (
    RiskIdentifier,
    error_identifier_from_primal,
    export_identifier_csv,
    make_identifier,
    risk_identifier_from_primal,
)
from phiquad.empirical import EmpiricalDistribution
from phiquad.errors import InputError, NonConvergence
from phiquad.primal import check_beta

RISK, DEVIATION, ERROR = "risk", "deviation", "error"

DEFAULT_SEED = 1
PHASE1_CAP = 20_000


@dataclass(frozen=True)
class SolverOptions:
    phase1_iterations: int = PHASE1_CAP
    stall_window: int = 250
    phase2_iterations: int | None = None
    tol: float = 1e-10
    raise_on_gap: float = 1e-6


@dataclass(eq=False)
class SolutionReport:
    """Decision, objective, worst-case weights and solver diagnostics."""

    problem: str
    spec: str
    beta: float
    decision: dict
    objective: float
    measure_value: float
    losses: np.ndarray
    probs: np.ndarray
    identifier: RiskIdentifier
    diagnostics: dict = field(default_factory=dict)
    points: np.ndarray | None = None

    def quadrangle(self):
        """All quadrangle elements of the optimal loss variable."""
        return closed_form_quadrangle(parse_spec(self.spec), self.beta, EmpiricalDistribution(self.losses, self.probs))

    def to_json(self) -> dict:
        quad = self.quadrangle()
        return {
            "command": self.problem,
            "spec": self.spec,
            "beta": self.beta,
            "values": quad.as_dict(),
            "optimizers": {"C": _finite_or_none(quad.optimal_C), "t": quad.optimal_t},
            "decision": {k: _jsonable(v) for k, v in self.decision.items()},
            "objective": self.objective,
            "measure_value": self.measure_value,
            "diagnostics": {k: _jsonable(v) for k, v in self.diagnostics.items()},
            "identifier": {
                "losses": self.losses.tolist(),
                "probs": self.probs.tolist(),
                "weights": self.identifier.weights.tolist(),
            },
        }

    def write_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n")


def _finite_or_none(v: float):
    return v if math.isfinite(v) else None


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, tuple):
        return list(v)
    return v


def reverify_report(doc: dict) -> float:
    """``E[loss * Q]`` recomputed from a report document (minus ``E[loss]`` for deviation/error)."""
    ident = doc["identifier"]
    z = np.asarray(ident["losses"], dtype=float)
    p = np.asarray(ident["probs"], dtype=float)
    q = np.asarray(ident["weights"], dtype=float)
    val = float(np.dot(p, z * q))
    if doc["diagnostics"].get("measure") in (DEVIATION, ERROR):
        val -= float(np.dot(p, z))
    return val


# ---------------------------------------------------------------- measures

def measure_value(spec: DivergenceSpec, beta: float, Z: EmpiricalDistribution, measure: str) -> float:
    cf = closed_form_quadrangle(spec, beta, Z)
    return {RISK: cf.risk, DEVIATION: cf.deviation, ERROR: cf.error}[measure]


def _measure_and_weights(spec, beta, Z: EmpiricalDistribution, measure: str):
    """Value of the measure and one subgradient weight vector ``G`` (never raises on kinks)."""
    cf = closed_form_quadrangle(spec, beta, Z)
    n = len(Z)
    if measure in (RISK, DEVIATION):
        if Z.is_constant:
            q = np.ones(n)
        else:
            q = select(spec, beta, Z.values, Z.probs, cf.shift, cf.optimal_t, mean=True).weights
        return (cf.risk, q) if measure == RISK else (cf.deviation, q - 1.0)
    q = select(spec, beta, Z.values, Z.probs, 0.0, cf.regret_t, mean=False, soft_mean=True).weights
    return cf.error, q - 1.0


@dataclass(eq=False)
class _AffineProblem:
    A: np.ndarray
    c: np.ndarray
    probs: np.ndarray
    spec: DivergenceSpec
    beta: float
    measure: str
    reg_weight: float = 0.0
    reg_mask: np.ndarray | None = None

    def loss(self, theta: np.ndarray) -> EmpiricalDistribution:
        return EmpiricalDistribution(self.A @ theta + self.c, self.probs)

    def reg(self, theta):
        if self.reg_weight == 0.0:
            return 0.0, np.zeros_like(theta)
        m = self.reg_mask if self.reg_mask is not None else np.ones_like(theta)
        return self.reg_weight * float(np.sum(m * theta * theta)), 2.0 * self.reg_weight * m * theta

    def __call__(self, theta: np.ndarray):
        Z = self.loss(theta)
        val, G = _measure_and_weights(self.spec, self.beta, Z, self.measure)
        r, dr = self.reg(theta)
        return val + r, self.A.T @ (self.probs * G) + dr


def _phase1(fn, x0, scale, opts: SolverOptions):
    f0, g0 = fn(x0)
    c = 0.5 * scale
    x = x0.copy()
    best_x, best_f = x0.copy(), f0
    avg = x0.copy()
    wsum = 0.0
    last_check = f0
    k = 0
    g = g0
    for k in range(1, opts.phase1_iterations + 1):
        gn = float(np.linalg.norm(g))
        if gn == 0.0:
            break
        step = c / math.sqrt(k)
        x = x - step * g / gn
        w = step
        wsum += w
        avg = avg + (w / wsum) * (x - avg)
        f, g = fn(x)
        if f < best_f:
            best_f, best_x = f, x.copy()
        if k % opts.stall_window == 0:
            fa, _ = fn(avg)
            if fa < best_f:
                best_f, best_x = fa, avg.copy()
            if last_check - best_f <= 1e-6 * (1.0 + abs(best_f)):
                break
            last_check = best_f
    return best_x, best_f, k, c / math.sqrt(max(k, 1))


def _bisect_1d(fn, x0, radius, opts: SolverOptions, iterations: int):
    lo, hi = x0[0] - radius, x0[0] + radius
    best_x, best_f = x0.copy(), fn(x0)[0]
    gap = math.inf
    it = 0
    for it in range(1, iterations + 1):
        mid = np.array([0.5 * (lo + hi)])
        f, g = fn(mid)
        if f < best_f:
            best_f, best_x = f, mid
        gap = abs(float(g[0])) * 0.5 * (hi - lo)
        if g[0] == 0.0 or gap <= opts.tol * (1.0 + abs(f)):
            gap = min(gap, 0.0 if g[0] == 0.0 else gap)
            break
        if g[0] > 0.0:
            hi = mid[0]
        else:
            lo = mid[0]
    return best_x, best_f, it, gap


def _ellipsoid(fn, x0, radius, opts: SolverOptions, iterations: int, feasibility=None):
    n = x0.size
    x = x0.copy()
    P = np.eye(n) * radius * radius
    best_x, best_f = None, math.inf
    gap = math.inf
    it = 0
    for it in range(1, iterations + 1):
        cut = feasibility(x) if feasibility is not None else None
        if cut is None:
            f, g = fn(x)
            if f < best_f:
                best_f, best_x = f, x.copy()
            Pg = P @ g
            gPg = float(g @ Pg)
            if gPg <= 0.0:
                gap = 0.0
                best_f, best_x = f, x.copy()
                break
            gap = min(gap, math.sqrt(gPg))
            if math.sqrt(gPg) <= opts.tol * (1.0 + abs(f)):
                break
        else:
            g = cut
            Pg = P @ g
            gPg = float(g @ Pg)
        gt = Pg / math.sqrt(gPg)
        x = x - gt / (n + 1.0)
        P = (n * n / (n * n - 1.0)) * (P - (2.0 / (n + 1.0)) * np.outer(gt, gt))
        P = 0.5 * (P + P.T)
    if best_x is None:
        best_x = x0.copy()
        best_f = fn(x0)[0]
    return best_x, best_f, it, gap


def _minimize(fn, x0, scale, opts: SolverOptions, feasibility=None, project=None):
    """Phase 1 then phase 2; returns ``(x, f, diagnostics)``."""
    if project is not None:
        def fn1(x):
            return fn(project(x))
        x1, f1, k1, last_step = _phase1(fn1, x0, scale, opts)
        x1 = project(x1)
        f1 = fn(x1)[0]
    else:
        x1, f1, k1, last_step = _phase1(fn, x0, scale, opts)
    n = x0.size
    cap = opts.phase2_iterations or (400 * n * n + 2000)
    radius = 2.0 * (float(np.linalg.norm(x1 - x0)) + scale)
    total2 = 0
    for _ in range(6):
        if n == 1 and feasibility is None:
            x2, f2, k2, gap = _bisect_1d(fn, x1, radius, opts, cap)
        else:
            x2, f2, k2, gap = _ellipsoid(fn, x1, radius, opts, cap, feasibility)
        total2 += k2
        # an optimum pressed against the starting ball means the ball was too small
        if float(np.linalg.norm(x2 - x1)) < 0.9 * radius:
            break
        x1, radius = x2, 4.0 * radius
    if f2 > f1:
        x2, f2 = x1, f1
    diag = {
        "phase1_iterations": k1,
        "phase2_iterations": total2,
        "final_step": last_step,
        "gap_bound": gap,
    }
    if gap > opts.raise_on_gap * (1.0 + abs(f2)):
        raise NonConvergence(f"optimality gap bound {gap:.3g} after {k1} + {total2} iterations", diag)
    return x2, f2, diag


# ---------------------------------------------------------------- problems

def _probs(n: int, probs) -> np.ndarray:
    if probs is None:
        return np.full(n, 1.0 / n)
    p = np.asarray(probs, dtype=float)
    if p.shape != (n,) or np.any(p <= 0.0):
        raise InputError("probs must be positive with one entry per sample")
    return p / p.sum()


@dataclass(frozen=True, eq=False)
class PortfolioProblem:
    """Scenario losses ``L`` (rows scenarios, columns assets); weights sum to one."""

    loss_matrix: np.ndarray
    spec: DivergenceSpec
    beta: float
    probs: np.ndarray | None = None
    long_only: bool = False

    def __post_init__(self):
        L = np.asarray(self.loss_matrix, dtype=float)
        if L.ndim != 2 or L.shape[1] < 2 or L.shape[0] < 2:
            raise InputError("portfolio needs at least 2 scenarios and 2 assets")
        object.__setattr__(self, "loss_matrix", L)
        object.__setattr__(self, "probs", _probs(L.shape[0], self.probs))
        object.__setattr__(self, "beta", check_beta(self.beta))


@dataclass(frozen=True, eq=False)
class ClassificationProblem:
    """Features ``X`` (n x d), labels in ``{-1, +1}``; penalty ``reg_weight * ||w||^2``."""

    features: np.ndarray
    labels: np.ndarray
    spec: DivergenceSpec
    beta: float
    reg_weight: float = 1.0
    probs: np.ndarray | None = None

    def __post_init__(self):
        X = np.asarray(self.features, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        y = np.asarray(self.labels, dtype=float).ravel()
        if y.size != X.shape[0]:
            raise InputError("one label per sample required")
        if not np.all(np.isin(y, (-1.0, 1.0))):
            raise InputError("labels must be -1 or +1")
        if not (np.any(y == 1.0) and np.any(y == -1.0)):
            raise InputError("both labels must be present")
        if self.reg_weight < 0.0:
            raise InputError("reg_weight must be nonnegative")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "probs", _probs(X.shape[0], self.probs))
        object.__setattr__(self, "beta", check_beta(self.beta))


@dataclass(frozen=True, eq=False)
class RegressionProblem:
    """Linear regression ``Y ~ X coef + C``."""

    regressors: np.ndarray
    regressand: np.ndarray
    spec: DivergenceSpec
    beta: float
    probs: np.ndarray | None = None

    def __post_init__(self):
        X = np.asarray(self.regressors, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        y = np.asarray(self.regressand, dtype=float).ravel()
        if y.size != X.shape[0]:
            raise InputError("one response per sample required")
        if X.shape[0] <= X.shape[1]:
            raise InputError("need more samples than regressors")
        object.__setattr__(self, "regressors", X)
        object.__setattr__(self, "regressand", y)
        object.__setattr__(self, "probs", _probs(X.shape[0], self.probs))
        object.__setattr__(self, "beta", check_beta(self.beta))


def _simplex_projection(w: np.ndarray) -> np.ndarray:
    u = np.sort(w)[::-1]
    css = np.cumsum(u) - 1.0
    idx = np.arange(1, w.size + 1)
    rho = np.nonzero(u - css / idx > 0)[0][-1]
    return np.maximum(w - css[rho] / (rho + 1.0), 0.0)


def solve_portfolio(problem: PortfolioProblem, options: SolverOptions | None = None) -> SolutionReport:
    """``min_{1^T w = 1} R(L w)``; no sign constraint unless ``long_only``."""
    opts = options or SolverOptions()
    L, p = problem.loss_matrix, problem.probs
    m = L.shape[1]
    w0 = np.full(m, 1.0 / m)
    # orthonormal basis of {v : 1^T v = 0}
    N = scipy.linalg.null_space(np.ones((1, m)))
    fn = _AffineProblem(L @ N, L @ w0, p, problem.spec, problem.beta, RISK)
    scale = 1.0
    project = feasibility = None
    if problem.long_only:
        def project(v):
            return N.T @ (_simplex_projection(w0 + N @ v) - w0)

        def feasibility(v):
            w = w0 + N @ v
            i = int(np.argmin(w))
            return -N[i] if w[i] < 0.0 else None
    v, f, diag = _minimize(fn, np.zeros(m - 1), scale, opts, feasibility, project)
    w = w0 + N @ v
    Z = EmpiricalDistribution(L @ w, p)
    ident = _risk_identifier(problem.spec, problem.beta, Z)
    diag["measure"] = RISK
    return SolutionReport("portfolio", problem.spec.name, problem.beta, {"weights": w}, float(f), float(f),
                          Z.values, p, ident, diag, L)


def solve_classification(problem: ClassificationProblem, options: SolverOptions | None = None) -> SolutionReport:
    """``min_{w, b} R(-L(w, b)) + reg_weight ||w||^2`` with margin ``L = y (w^T x - b)``."""
    opts = options or SolverOptions()
    X, y, p = problem.features, problem.labels, problem.probs
    d = X.shape[1]
    A = np.hstack([-(y[:, None] * X), y[:, None]])
    mask = np.concatenate([np.ones(d), [0.0]])
    fn = _AffineProblem(A, np.zeros(X.shape[0]), p, problem.spec, problem.beta, RISK,
                        problem.reg_weight, mask)
    scale = 1.0 + float(np.max(np.abs(X)))
    theta, f, diag = _minimize(fn, np.zeros(d + 1), scale, opts)
    Z = fn.loss(theta)
    ident = _risk_identifier(problem.spec, problem.beta, Z)
    w, b = theta[:d], float(theta[d])
    diag["measure"] = RISK
    return SolutionReport("classify", problem.spec.name, problem.beta, {"w": w, "b": b}, float(f),
                          float(f - problem.reg_weight * float(w @ w)), Z.values, p, ident, diag, X)


@dataclass(eq=False)
class RegressionReport:
    """Both routes of the error-shaping decomposition."""

    route_a: SolutionReport
    route_b: SolutionReport
    statistic_interval: tuple[float, float]
    route_a_statistic_interval: tuple[float, float] = (math.nan, math.nan)

    @property
    def objective_gap(self) -> float:
        return abs(self.route_a.objective - self.route_b.objective)

    def intercept_contained(self, tol: float = 1e-4) -> bool:
        """Is the route-A intercept in the statistic of the route-A residual ``Y - f(X)``?

        This is the pairing the decomposition asserts. When the deviation has
        several minimizing ``f`` the two routes may pick different ones, so
        the route-B interval is only checked by ``intercept_in_route_b``.
        """
        lo, hi = self.route_a_statistic_interval
        C = self.route_a.decision["intercept"]
        return lo - tol <= C <= hi + tol

    def intercept_in_route_b(self, tol: float = 1e-4) -> bool:
        lo, hi = self.statistic_interval
        C = self.route_a.decision["intercept"]
        return lo - tol <= C <= hi + tol

    def to_json(self) -> dict:
        b = self.route_b.to_json()
        return {
            "command": "regress",
            "spec": b["spec"],
            "beta": b["beta"],
            "values": b["values"],
            "optimizers": b["optimizers"],
            "route_a": self.route_a.to_json(),
            "route_b": b,
            "statistic_interval": list(self.statistic_interval),
            "route_a_statistic_interval": list(self.route_a_statistic_interval),
            "objective_gap": self.objective_gap,
        }

    def write_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n")


def solve_regression(problem: RegressionProblem, options: SolverOptions | None = None) -> RegressionReport:
    """Route A minimizes the error over ``(coef, C)``; route B minimizes the
    deviation over ``coef`` and sets ``C`` to the statistic of the residual."""
    opts = options or SolverOptions()
    X, y, p = problem.regressors, problem.regressand, problem.probs
    d = X.shape[1]
    spec, beta = problem.spec, problem.beta
    design = np.hstack([X, np.ones((X.shape[0], 1))])
    sw = np.sqrt(p)
    start = np.linalg.lstsq(design * sw[:, None], y * sw, rcond=None)[0]
    scale = 1.0 + float(np.max(np.abs(start))) + float(np.std(y))

    fa = _AffineProblem(-design, y, p, spec, beta, ERROR)
    theta_a, f_a, diag_a = _minimize(fa, start.copy(), scale, opts)
    Za = fa.loss(theta_a)
    stat_a = closed_form_quadrangle(spec, beta, EmpiricalDistribution(y - X @ theta_a[:d], p)).statistic_interval
    ident_a = _error_identifier(spec, beta, Za)
    diag_a["measure"] = ERROR
    route_a = SolutionReport("regress", spec.name, beta, {"coef": theta_a[:d], "intercept": float(theta_a[d])},
                             float(f_a), float(f_a), Za.values, p, ident_a, diag_a, np.column_stack([X, y]))

    fb = _AffineProblem(-X, y, p, spec, beta, DEVIATION)
    theta_b, f_b, diag_b = _minimize(fb, start[:d].copy(), scale, opts)
    Zb = fb.loss(theta_b)
    cf = closed_form_quadrangle(spec, beta, Zb)
    ident_b = _risk_identifier(spec, beta, Zb)
    diag_b["measure"] = DEVIATION
    route_b = SolutionReport("regress", spec.name, beta, {"coef": theta_b, "intercept": cf.statistic},
                             float(f_b), float(f_b), Zb.values, p, ident_b, diag_b, np.column_stack([X, y]))
    return RegressionReport(route_a, route_b, cf.statistic_interval, stat_a)


def _risk_identifier(spec, beta, Z: EmpiricalDistribution) -> RiskIdentifier:
    cf = closed_form_quadrangle(spec, beta, Z)
    return risk_identifier_from_primal(spec, beta, Z, t=cf.optimal_t, shift=cf.shift)


def _error_identifier(spec, beta, Z: EmpiricalDistribution) -> RiskIdentifier:
    cf = closed_form_quadrangle(spec, beta, Z)
    return error_identifier_from_primal(spec, beta, Z, cf.regret_t)


def export_identifier(report: SolutionReport, path=None) -> list[dict]:
    """Identifier table ``atom_index, value(s), prob, weight``; written as CSV when ``path`` is given.

    ``value`` is the scalar loss; when the report carries sample points they
    replace it as ``v0, v1, ...`` columns.
    """
    ident = report.identifier
    rows = []
    for i in range(len(ident.weights)):
        row = {"atom_index": i}
        if report.points is None:
            row["value"] = float(ident.values[i])
        else:
            for j, v in enumerate(np.atleast_1d(report.points[i])):
                row[f"v{j}"] = float(v)
        row["prob"] = float(ident.probs[i])
        row["weight"] = float(ident.weights[i])
        rows.append(row)
    if path is not None:
        export_identifier_csv(ident, path, report.points)
    return rows


def constant_identifier(spec: DivergenceSpec, Z: EmpiricalDistribution) -> RiskIdentifier:
    return make_identifier(spec, Z, np.ones(len(Z)))


# ---------------------------------------------------------------- oracles and data

def ols(regressors, regressand, probs=None) -> tuple[np.ndarray, float]:
    """Weighted least squares by the normal equations: ``(coef, intercept)``."""
    X = np.asarray(regressors, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(regressand, dtype=float)
    p = _probs(X.shape[0], probs)
    D = np.hstack([X, np.ones((X.shape[0], 1))])
    G = D.T @ (p[:, None] * D)
    sol = np.linalg.solve(G, D.T @ (p * y))
    return sol[:-1], float(sol[-1])


def mean_portfolio_oracle(loss_matrix, beta: float, probs=None) -> np.ndarray:
    """``min_{1^T w = 1} mu^T w + sqrt(beta) sqrt(w^T Sigma w)`` as a second-order cone program."""
    import cvxpy as cp

    L = np.asarray(loss_matrix, dtype=float)
    p = _probs(L.shape[0], probs)
    mu = p @ L
    centered = (L - mu) * np.sqrt(p)[:, None]
    w = cp.Variable(L.shape[1])
    prob = cp.Problem(cp.Minimize(mu @ w + math.sqrt(beta) * cp.norm(centered @ w, 2)), [cp.sum(w) == 1])
    prob.solve(solver=cp.CLARABEL)
    return np.asarray(w.value, dtype=float)


def casestudy_portfolio_data(seed: int = DEFAULT_SEED, n: int = 1000) -> np.ndarray:
    """Losses of two assets: bivariate zero-mean Gaussian, unit variances, covariance 0.5."""
    rng = np.random.default_rng(seed)
    return rng.multivariate_normal([0.0, 0.0], [[1.0, 0.5], [0.5, 1.0]], size=n)


def casestudy_regression_data(seed: int = DEFAULT_SEED, n: int = 1000) -> tuple[np.ndarray, np.ndarray]:
    """Same draws as the portfolio data; first coordinate regresses the second."""
    xy = casestudy_portfolio_data(seed, n)
    return xy[:, :1], xy[:, 1]


def casestudy_classification_data(seed: int = DEFAULT_SEED, n_per_class: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Two Gaussian classes at ``(-0.3, 0)`` (label +1) and ``(0.3, 0)`` (label -1).

    Both have variance 0.05 and covariance 0.02.
    """
    rng = np.random.default_rng(seed)
    cov = [[0.05, 0.02], [0.02, 0.05]]
    pos = rng.multivariate_normal([-0.3, 0.0], cov, size=n_per_class)
    neg = rng.multivariate_normal([0.3, 0.0], cov, size=n_per_class)
    X = np.vstack([pos, neg])
    y = np.concatenate([np.ones(n_per_class), -np.ones(n_per_class)])
    return X, y


CASESTUDY_SPEC = "pearson_chi2_extended"
CASESTUDY_BETA = {"portfolio": 100.0, "regress": 100.0, "classify": 0.01}


def casestudy_spec() -> DivergenceSpec:
    return parse_spec(CASESTUDY_SPEC)
