"""Closed-form quadrangles for every catalog entry.

These are independent of :mod:`phiquad.primal`: each uses the elementary
statistics of :mod:`phiquad.empirical` plus at most a monotone scalar
root-find. They double as fast production paths for the applications.

Parameter conventions (all conversions live here):

* indicator_cvar: ``alpha`` given directly.
* pearson_chi2: second-order quantile level ``alpha = 1 - 1/sqrt(1 + beta)``.
* tvd: CVaR tail level ``beta / 2``.
* interval_indicator: quantile level ``(b - 1)/(b - a)``.

The statistic is always the minimizer on the scale of ``X`` of
``C + V(X - C)`` for the catalog representative of ``phi``. For the
non-extended chi-square this is ``q + 2t*`` with ``q`` the second-order
quantile; :func:`chi2_anchor` returns ``q`` itself.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.optimize import brentq

from phiquad.divergences import DivergenceSpec
from phiquad.empirical import (
    EmpiricalDistribution,
    as_distribution,
    cvar,
    ess_inf,
    ess_sup,
    expectation,
    expectile,
    l2_norm,
    second_order_quantile,
    std_dev,
    var_interval,
)
from phiquad.primal import QuadrangleResult, check_beta

_ITERS = 300


def chi2_alpha(beta: float) -> float:
    """Second-order quantile level matched to radius ``beta``: ``sqrt(1 + beta) = 1/(1 - alpha)``."""
    return 1.0 - 1.0 / math.sqrt(1.0 + beta)


def chi2_beta(alpha: float) -> float:
    return 1.0 / (1.0 - alpha) ** 2 - 1.0


def tvd_tail_level(beta: float) -> float:
    return 0.5 * beta


def interval_alpha(a: float, b: float) -> float:
    """Quantile level of the interval-indicator statistic."""
    return (b - 1.0) / (b - a)


def cvar_upper_bound(alpha: float) -> float:
    """Upper end ``1/(1 - alpha)`` of the indicator interval for ``indicator_cvar``."""
    return 1.0 / (1.0 - alpha)


def _result(X, beta, name, risk, regret, interval, t, shift, regret_t) -> QuadrangleResult:
    mean = expectation(X)
    return QuadrangleResult(
        risk=float(risk),
        deviation=max(float(risk) - mean, 0.0),
        regret=float(regret),
        error=max(float(regret) - mean, 0.0),
        statistic_interval=(float(interval[0]), float(interval[1])),
        optimal_t=float(t),
        optimal_C=float(shift) / t if t > 0.0 else math.nan,
        beta=float(beta),
        spec_name=name,
        shift=float(shift),
        regret_t=float(regret_t),
    )


def mean_quadrangle(beta: float, X) -> QuadrangleResult:
    """Extended chi-square: ``E[X] + sqrt(beta) sigma(X)`` and ``E[X] + sqrt(beta) ||X||_2``."""
    X = as_distribution(X)
    beta = check_beta(beta)
    rb = math.sqrt(beta)
    sd, l2, m = std_dev(X), l2_norm(X), expectation(X)
    return _result(X, beta, "pearson_chi2_extended", m + rb * sd, m + rb * l2, (m, m),
                   sd / (2.0 * rb), m, l2 / (2.0 * rb))


def _positive_homogeneous(X, beta, name, a: float, b: float, alpha: float | None = None) -> QuadrangleResult:
    """Indicator of ``[a, b]``: ``(1 - a) CVaR + a E[X]`` and ``E[b X_+ - a X_-]``."""
    if alpha is None:
        alpha = interval_alpha(a, b)
    m = expectation(X)
    # written as a shift of the mean so a constant comes back exactly
    cv = min(cvar(X, alpha), float(X.values.max()))
    risk = cv if a == 0.0 else m + (1.0 - a) * (cv - m)
    pos = float(np.dot(X.probs, np.maximum(X.values, 0.0)))
    neg = float(np.dot(X.probs, np.maximum(-X.values, 0.0)))
    interval = var_interval(X, alpha)
    return _result(X, beta, name, risk, b * pos - a * neg, interval, 0.0, interval[0], 0.0)


def quantile_quadrangle(alpha: float, X, beta: float = 1.0) -> QuadrangleResult:
    """Indicator of ``[0, 1/(1 - alpha)]``: CVaR risk, VaR statistic; ``beta`` plays no role."""
    X = as_distribution(X)
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    name = f"indicator_cvar:alpha={alpha:g}"
    # pass alpha itself: recovering it from b = 1/(1 - alpha) costs an ulp
    return _positive_homogeneous(X, check_beta(beta), name, 0.0, cvar_upper_bound(alpha), alpha)


def interval_indicator_quadrangle(a: float, b: float, X, beta: float = 1.0) -> QuadrangleResult:
    X = as_distribution(X)
    if not 0.0 < a < 1.0 < b:
        raise ValueError(f"need 0 < a < 1 < b, got a={a}, b={b}")
    name = f"interval_indicator:a={a:g},b={b:g}"
    return _positive_homogeneous(X, check_beta(beta), name, a, b)


def range_quadrangle(beta: float, X) -> QuadrangleResult:
    """Extended TVD: half-range risk, ``L-infinity`` regret, mid-range statistic."""
    X = as_distribution(X)
    beta = check_beta(beta)
    hi, lo, m = ess_sup(X), ess_inf(X), expectation(X)
    half = 0.5 * (hi - lo)
    center = 0.5 * (hi + lo)
    sup_abs = float(np.max(np.abs(X.values)))
    return _result(X, beta, "tvd_extended", m + beta * half, m + beta * sup_abs, (center, center),
                   half, center, sup_abs)


def _bisect_increasing(fn, lo: float, hi: float) -> float:
    """Root of a nondecreasing ``fn`` bracketed by ``fn(lo) < 0 < fn(hi)``, found by Brent's method in ``log t``."""
    return math.exp(brentq(lambda u: fn(math.exp(u)), math.log(lo), math.log(hi),
                           xtol=1e-15, rtol=4.0 * np.finfo(float).eps, maxiter=_ITERS))


def _bracket(fn, start: float) -> tuple[float, float] | None:
    """Grow and shrink around ``start`` until ``fn`` changes sign; ``None`` if it never goes negative."""
    hi = start
    while fn(hi) <= 0.0:
        hi *= 2.0
    lo = min(start, 0.5 * hi)
    while fn(lo) >= 0.0:
        lo *= 0.5
        if lo < 1e-300:
            return None
    return lo, hi


def _tilted(X: EmpiricalDistribution, t: float) -> tuple[float, float]:
    """``(ln E[e^{X/t}], E_tilted[X/t])`` with the max shifted out."""
    u = X.values / t
    m = float(u.max())
    w = X.probs * np.exp(u - m)
    sw = float(w.sum())
    return m + math.log(sw), float(np.dot(w, u)) / sw


def evar_derivative(X: EmpiricalDistribution, beta: float, t: float) -> float:
    """``d/dt t(beta + ln E[e^{X/t}]) = beta + ln E[e^{X/t}] - E_tilted[X]/t``."""
    lme, eu = _tilted(X, t)
    return beta + lme - eu


def evar_equation_residual(X: EmpiricalDistribution, beta: float, t: float) -> float:
    """``t beta + t ln E[e^{X/t}] - E[X e^{X/t}]/E[e^{X/t}]``, zero at the optimal ``t``."""
    return t * evar_derivative(X, beta, t)


def evar_optimal_t(beta: float, X) -> float:
    """Minimizer of ``t(beta + ln E[e^{X/t}])`` over ``t >= 0``.

    It is 0 exactly when ``beta + ln P(X = ess sup) >= 0``, in which case
    the risk is ``ess sup X``.
    """
    X = as_distribution(X)
    if X.is_constant:
        return 0.0
    top = ess_sup(X)
    p_top = float(X.probs[X.values == top].sum())
    if beta + math.log(p_top) >= 0.0:
        return 0.0
    span = top - ess_inf(X)
    br = _bracket(lambda t: evar_derivative(X, beta, t), span)
    if br is None:
        return 0.0
    return _bisect_increasing(lambda t: evar_derivative(X, beta, t), *br)


def _kl_regret_terms(X: EmpiricalDistribution, beta: float, t: float) -> tuple[float, float]:
    """``(g(t), g'(t))`` for ``g(t) = t(beta - 1 + E[e^{X/t}])``, overflow-safe."""
    u = X.values / t
    with np.errstate(over="ignore", invalid="ignore"):
        e = np.exp(u)
        g = t * (beta - 1.0 + float(np.dot(X.probs, e)))
        dg = beta - 1.0 + float(np.dot(X.probs, e * (1.0 - u)))
    if math.isnan(dg):
        dg = -math.inf
    return g, dg


def evar_quadrangle(beta: float, X) -> QuadrangleResult:
    """KL divergence: EVaR risk, statistic ``t* ln E[e^{X/t*}]``."""
    X = as_distribution(X)
    beta = check_beta(beta)
    if X.is_constant:
        c = float(X.values[0])
        reg = _kl_regret(X, beta)
        return _result(X, beta, "kl", c, reg[0], (c, c), 0.0, c, reg[1])
    t = evar_optimal_t(beta, X)
    if t == 0.0:
        risk = stat = ess_sup(X)
    else:
        lme, _ = _tilted(X, t)
        stat = t * lme
        risk = t * (beta + lme)
    reg, reg_t = _kl_regret(X, beta)
    return _result(X, beta, "kl", risk, reg, (stat, stat), t, stat, reg_t)


def _kl_regret(X: EmpiricalDistribution, beta: float) -> tuple[float, float]:
    """``min_{t >= 0} t(beta - 1 + E[e^{X/t}])`` by bisection on the derivative."""
    top = ess_sup(X)
    if top <= 0.0:
        p0 = float(X.probs[X.values == 0.0].sum())
        if beta - 1.0 + p0 >= 0.0:
            return 0.0, 0.0
    scale = max(float(np.max(np.abs(X.values))), 1e-300)
    br = _bracket(lambda t: _kl_regret_terms(X, beta, t)[1], scale)
    if br is None:
        return 0.0, 0.0
    t = _bisect_increasing(lambda t: _kl_regret_terms(X, beta, t)[1], *br)
    return _kl_regret_terms(X, beta, t)[0], t


def tvd_quadrangle(beta: float, X) -> QuadrangleResult:
    """TVD: ``(beta/2) ess sup + (1 - beta/2) CVaR_{beta/2}``; ``ess sup`` once ``beta >= 2``.

    The statistic is ``(ess sup + VaR_{beta/2})/2`` over the VaR interval.
    """
    X = as_distribution(X)
    beta = check_beta(beta)
    top = ess_sup(X)
    if beta >= 2.0 or X.is_constant:
        risk, interval, t = top, (top, top), 0.0
    else:
        level = tvd_tail_level(beta)
        risk = level * top + (1.0 - level) * cvar(X, level)
        v_lo, v_hi = var_interval(X, level)
        interval = (0.5 * (top + v_lo), 0.5 * (top + v_hi))
        t = 0.5 * (top - v_lo)
    regret, regret_t = _tvd_regret(X, beta)
    return _result(X, beta, "tvd", risk, regret, interval, t, interval[0], regret_t)


def _tvd_regret(X: EmpiricalDistribution, beta: float) -> tuple[float, float]:
    """``min t beta + E[max(X, -t)]`` over ``t >= max(ess sup X, 0)``: piecewise linear, so check breakpoints."""
    t0 = max(ess_sup(X), 0.0)
    cands = [t0] + [-x for x in X.values if -x > t0]
    best = (math.inf, t0)
    for t in cands:
        val = t * beta + float(np.dot(X.probs, np.maximum(X.values, -t)))
        if val < best[0]:
            best = (val, t)
    return best


def chi2_anchor(beta: float, X) -> float:
    """The second-order quantile ``q`` at level ``1 - 1/sqrt(1 + beta)``; ``ess sup`` when out of range."""
    X = as_distribution(X)
    if X.is_constant:
        return float(X.values[0])
    return second_order_quantile(X, chi2_alpha(check_beta(beta)))


def chi2_quadrangle(beta: float, X) -> QuadrangleResult:
    """Non-extended chi-square: second-order superquantile ``q + sqrt(1 + beta) ||(X - q)_+||_2``."""
    X = as_distribution(X)
    beta = check_beta(beta)
    q = chi2_anchor(beta, X)
    tail = math.sqrt(float(np.dot(X.probs, np.maximum(X.values - q, 0.0) ** 2)))
    k = math.sqrt(1.0 + beta)
    risk = q + k * tail
    t = tail / (2.0 * k)
    s = q + 2.0 * t
    interval = (s, s)
    if not X.is_constant:
        top = ess_sup(X)
        p_top = float(X.probs[X.values == top].sum())
        if abs((1.0 + beta) * p_top - 1.0) <= 1e-12:
            # the ratio defining q is constant on [next atom, top]: every such q is optimal
            below = float(X.values[X.values < top].max())
            interval = (below + (top - below) * math.sqrt(p_top / (1.0 + beta)), top)
    regret, regret_t = _chi2_regret(X, beta)
    return _result(X, beta, "pearson_chi2", risk, regret, interval, t, s, regret_t)


def _chi2_regret(X: EmpiricalDistribution, beta: float) -> tuple[float, float]:
    """``min_{t >= 0} t(beta - 1) + E[(X + 2t)_+^2]/(4t)``.

    Between consecutive breakpoints ``-x_i/2`` the active set is fixed and
    the objective is ``c1 t + A/(4t) + B``, minimized in closed form.
    """
    x, p = X.values, X.probs

    def h(t):
        if t <= 0.0:
            return 0.0 if x.max() <= 0.0 else math.inf
        return t * (beta - 1.0) + float(np.dot(p, np.maximum(x + 2.0 * t, 0.0) ** 2)) / (4.0 * t)

    breaks = sorted({-xi / 2.0 for xi in x if xi < 0.0})
    edges = [0.0] + breaks + [math.inf]
    cands = [0.0] + breaks
    for lo, hi in zip(edges[:-1], edges[1:]):
        mid = lo + 1.0 if math.isinf(hi) else 0.5 * (lo + hi)
        act = x + 2.0 * mid > 0.0
        c1 = beta - 1.0 + float(p[act].sum())
        A = float(np.dot(p[act], x[act] ** 2))
        if c1 > 0.0 and A > 0.0:
            cands.append(min(max(math.sqrt(A / (4.0 * c1)), lo), hi))
    best = min((h(t), t) for t in cands)
    return best


def expectile_quadrangle(q: float, beta: float, X) -> QuadrangleResult:
    """Generalized chi-square: ``E[X] + sqrt(beta E[q X_+^2 + (1-q) X_-^2])`` regret, expectile statistic."""
    X = as_distribution(X)
    beta = check_beta(beta)
    if not 0.0 < q < 1.0:
        raise ValueError(f"q must be in (0, 1), got {q}")

    def asym(v):
        return float(np.dot(X.probs, q * np.maximum(v, 0.0) ** 2 + (1.0 - q) * np.maximum(-v, 0.0) ** 2))

    m = expectation(X)
    e = expectile(X, q)
    A = asym(X.values - e)
    A0 = asym(X.values)
    rb = math.sqrt(beta)
    return _result(X, beta, f"generalized_chi2_expectile:q={q:g}", m + rb * math.sqrt(A),
                   m + rb * math.sqrt(A0), (e, e), math.sqrt(A / (4.0 * beta)), e,
                   math.sqrt(A0 / (4.0 * beta)))


def closed_form_quadrangle(spec: DivergenceSpec, beta: float, X) -> QuadrangleResult:
    """Dispatch to the closed form matching ``spec``."""
    kind = spec.kind
    if kind == "pearson_chi2_extended":
        return mean_quadrangle(beta, X)
    if kind == "tvd_extended":
        return range_quadrangle(beta, X)
    if kind == "kl":
        return evar_quadrangle(beta, X)
    if kind == "tvd":
        return tvd_quadrangle(beta, X)
    if kind == "pearson_chi2":
        return chi2_quadrangle(beta, X)
    if kind == "indicator_cvar":
        return quantile_quadrangle(spec.param("alpha"), X, beta)
    if kind == "generalized_chi2_expectile":
        return expectile_quadrangle(spec.param("q"), beta, X)
    return interval_indicator_quadrangle(spec.param("a"), spec.param("b"), X, beta)
