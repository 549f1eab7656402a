from __future__ import annotations

import math

import numpy as np
import pytest

from phiquad.closed_form import (
    chi2_alpha,
    chi2_beta,
    chi2_quadrangle,
    closed_form_quadrangle,
    evar_equation_residual,
    evar_optimal_t,
    evar_quadrangle,
    expectile_quadrangle,
    interval_indicator_quadrangle,
    mean_quadrangle,
    quantile_quadrangle,
    range_quadrangle,
    tvd_quadrangle,
)
from phiquad.divergences import parse_spec
from phiquad.empirical import EmpiricalDistribution, cvar, expectation, second_order_quantile, std_dev
from phiquad.primal import primal_error, primal_quadrangle, primal_risk

from _pool import BETAS, SPECS, pool, uniform

C = EmpiricalDistribution([1.7, 1.7, 1.7], [0.2, 0.3, 0.5])


def test_mean_quadrangle():
    q = mean_quadrangle(1.0, uniform(0, 2))
    assert (q.risk, q.deviation, q.statistic_interval) == (2.0, 1.0, (1.0, 1.0))
    assert q.regret == pytest.approx(1 + math.sqrt(2), abs=1e-15)
    assert q.error == pytest.approx(math.sqrt(2), abs=1e-15)
    assert mean_quadrangle(4.0, uniform(0, 2)).deviation == 2.0
    c = mean_quadrangle(0.3, C)
    assert c.risk == pytest.approx(1.7, abs=1e-15) and c.deviation == pytest.approx(0.0, abs=1e-15)


def test_quantile_quadrangle():
    q = quantile_quadrangle(0.75, uniform(1, 2, 3, 4))
    assert (q.risk, q.deviation) == (4.0, 1.5)
    assert quantile_quadrangle(0.75, uniform(-1, 1)).error == 2.0
    c = quantile_quadrangle(0.4, C)
    assert c.risk == pytest.approx(1.7, abs=1e-15) and c.statistic_interval == (1.7, 1.7)


def test_quantile_risk_is_cvar_exactly():
    for X in pool(31, 40):
        for alpha in (0.1, 0.5, 0.75, 0.95):
            assert quantile_quadrangle(alpha, X).risk == cvar(X, alpha)


def test_range_quadrangle():
    q = range_quadrangle(1.0, uniform(-1, 3))
    assert (q.deviation, q.statistic_interval, q.error) == (2.0, (1.0, 1.0), 3.0)
    assert range_quadrangle(0.5, uniform(-1, 3)).risk == 2.0
    c = range_quadrangle(0.7, C)
    assert c.deviation == 0.0 and c.statistic_interval == (1.7, 1.7)


def test_evar_limits():
    X = uniform(-1, 0.5, 1)
    assert evar_quadrangle(0.4, C).risk == pytest.approx(1.7, abs=1e-12)
    # the gap to the mean shrinks like sqrt(2 beta Var X)
    gap = evar_quadrangle(1e-6, X).risk - expectation(X)
    assert gap == pytest.approx(math.sqrt(2e-6) * std_dev(X), rel=1e-2)
    Y = uniform(-0.5, 0.5)
    assert evar_quadrangle(1e-6, Y).risk == pytest.approx(0.0, abs=1e-3)
    assert evar_quadrangle(20.0, uniform(-1, 1)).risk == pytest.approx(1.0, abs=1e-3)


def test_evar_statistic_equation():
    for X in pool(32, 20):
        for beta in BETAS:
            t = evar_optimal_t(beta, X)
            if t > 0.0:
                assert abs(evar_equation_residual(X, beta, t)) <= 1e-6


def test_evar_zero_t_when_top_atom_heavy():
    # beta + ln P(X = ess sup) >= 0: the optimum is t = 0 and the risk is ess sup
    X = EmpiricalDistribution([0.0, 1.0], [0.4, 0.6])
    beta = 0.6
    assert beta + math.log(0.6) >= 0.0
    q = evar_quadrangle(beta, X)
    assert q.optimal_t == 0.0 and q.risk == 1.0 and math.isnan(q.optimal_C)


def test_tvd_quadrangle():
    assert tvd_quadrangle(1.0, uniform(1, 2, 3, 4)).risk == 3.75
    X = uniform(-1, 0.5, 1)
    assert tvd_quadrangle(1e-8, X).risk == pytest.approx(expectation(X), abs=1e-6)
    assert tvd_quadrangle(0.9, C).risk == pytest.approx(1.7, abs=1e-15)


def test_tvd_statistic_is_center_of_sup_and_var():
    X = uniform(1, 2, 3, 4)
    # tail level 0.5 puts VaR on [2, 3], so the statistic is [(4 + 2)/2, (4 + 3)/2]
    assert tvd_quadrangle(1.0, X).statistic_interval == (3.0, 3.5)
    p = primal_quadrangle(parse_spec("tvd"), 1.0, X).statistic_interval
    assert p == pytest.approx((3.0, 3.5), abs=1e-7)


def test_chi2_quadrangle():
    assert chi2_alpha(3.0) == 0.5 and chi2_beta(0.5) == 3.0
    X = uniform(0, 2)
    q = chi2_quadrangle(3.0, X)
    assert q.risk == pytest.approx(primal_risk(parse_spec("pearson_chi2"), 3.0, X).value, abs=1e-5)
    assert chi2_quadrangle(0.4, C).risk == pytest.approx(1.7, abs=1e-15)
    Y = uniform(0, 1, 2, 4)
    beta = 0.7
    q = chi2_quadrangle(beta, Y)
    anchor = second_order_quantile(Y, chi2_alpha(beta))
    assert q.risk == pytest.approx(anchor + math.sqrt(1 + beta) * math.sqrt(np.mean(np.maximum(Y.values - anchor, 0) ** 2)), abs=1e-12)


def test_chi2_flat_statistic():
    # (1 + beta) P(X = ess sup) = 1 makes the certainty objective flat on a stretch below the top
    X = uniform(0, 2)
    q = chi2_quadrangle(1.0, X)
    lo, hi = q.statistic_interval
    assert hi == 2.0 and lo == pytest.approx(1.0, abs=1e-12)
    plo, phi = primal_quadrangle(parse_spec("pearson_chi2"), 1.0, X).statistic_interval
    assert (plo, phi) == pytest.approx((lo, hi), abs=1e-6)


def test_expectile_quadrangle():
    X = uniform(0, 2)
    q = expectile_quadrangle(0.75, 1.0, X)
    # E = sqrt(beta E[q X_+^2 + (1 - q) X_-^2]) = sqrt(0.5 * 0.75 * 4)
    assert q.error == pytest.approx(math.sqrt(1.5), abs=1e-15)
    spec = parse_spec("generalized_chi2_expectile:q=0.75")
    assert q.error == pytest.approx(primal_error(spec, 1.0, X).value, abs=1e-6)
    assert q.statistic_interval == pytest.approx((1.5, 1.5), abs=1e-12)
    c = expectile_quadrangle(0.3, 0.5, C)
    assert c.deviation == pytest.approx(0.0, abs=1e-15) and c.statistic_interval == pytest.approx((1.7, 1.7))


def test_expectile_half_is_mean_at_half_beta():
    for X in pool(33, 10):
        e = expectile_quadrangle(0.5, 0.8, X)
        m = mean_quadrangle(0.4, X)
        assert e.risk == pytest.approx(m.risk, abs=1e-12)
        assert e.regret == pytest.approx(m.regret, abs=1e-12)
        assert e.deviation == pytest.approx(std_dev(X) * math.sqrt(0.4), abs=1e-12)


def test_interval_indicator_quadrangle():
    X = uniform(-1, 1)
    q = interval_indicator_quadrangle(0.5, 2.0, X)
    assert q.error == pytest.approx(0.75, abs=1e-15)
    Y = uniform(1, 2, 3, 5)
    near = interval_indicator_quadrangle(1e-6, 1.0 / (1.0 - 0.75), Y)
    assert near.risk == pytest.approx(cvar(Y, 0.75), abs=1e-5)
    assert interval_indicator_quadrangle(0.3, 4.0, C).risk == pytest.approx(1.7, abs=1e-15)


@pytest.mark.parametrize("spec", SPECS, ids=[s.name for s in SPECS])
def test_closed_form_matches_primal(spec):
    for X in pool(34, 25):
        for beta in BETAS:
            cf = closed_form_quadrangle(spec, beta, X)
            pr = primal_quadrangle(spec, beta, X)
            for key in ("risk", "deviation", "regret", "error"):
                assert getattr(cf, key) == pytest.approx(getattr(pr, key), abs=1e-5), key
            assert cf.statistic_interval == pytest.approx(pr.statistic_interval, abs=1e-5)
            mean = expectation(X)
            assert cf.risk == pytest.approx(cf.deviation + mean, abs=1e-7)
            assert cf.regret == pytest.approx(cf.error + mean, abs=1e-7)
