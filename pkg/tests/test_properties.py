"""Randomized property checks over generated distributions."""

from __future__ import annotations

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from phiquad.closed_form import closed_form_quadrangle
from phiquad.divergences import catalog
from phiquad.empirical import EmpiricalDistribution, cvar, cvar_rockafellar_uryasev, expectation
from phiquad.primal import primal_quadrangle

SPECS = catalog(alpha=0.75, q=0.7, a=0.5, b=2.0)

values = st.lists(st.floats(-5, 5, allow_nan=False).map(lambda v: round(v, 2)), min_size=2, max_size=5)
weights = st.lists(st.floats(0.05, 1.0), min_size=5, max_size=5)


@st.composite
def distributions(draw):
    x = draw(values)
    w = np.array(draw(weights)[: len(x)])
    return EmpiricalDistribution(x, w / w.sum())


@settings(max_examples=60, deadline=None)
@given(distributions(), st.sampled_from(SPECS), st.sampled_from([0.05, 0.5, 1.0]))
def test_closed_form_agrees_with_primal(X, spec, beta):
    cf = closed_form_quadrangle(spec, beta, X)
    pr = primal_quadrangle(spec, beta, X)
    assert abs(cf.risk - pr.risk) <= 1e-5
    assert abs(cf.regret - pr.regret) <= 1e-5


@settings(max_examples=60, deadline=None)
@given(distributions(), st.sampled_from(SPECS), st.floats(-3, 3))
def test_translation_equivariance(X, spec, c):
    base = closed_form_quadrangle(spec, 0.5, X)
    moved = closed_form_quadrangle(spec, 0.5, X.shift(c))
    assert abs(moved.risk - base.risk - c) <= 1e-7 * (1 + abs(base.risk) + abs(c))
    assert abs(moved.deviation - base.deviation) <= 1e-7 * (1 + base.deviation)


@settings(max_examples=100, deadline=None)
@given(distributions(), st.floats(0.0, 0.99))
def test_cvar_two_ways(X, alpha):
    assert abs(cvar(X, alpha) - cvar_rockafellar_uryasev(X, alpha)) <= 1e-9


@settings(max_examples=60, deadline=None)
@given(distributions(), st.sampled_from(SPECS))
def test_risk_between_mean_and_sup(X, spec):
    r = closed_form_quadrangle(spec, 0.5, X).risk
    assert expectation(X) - 1e-9 <= r
    if not spec.is_extended:
        assert r <= X.values.max() + 1e-9
