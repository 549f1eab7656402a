from __future__ import annotations

import math

import numpy as np
import pytest

from phiquad.divergences import (
    CATALOG_KINDS,
    DivergenceSpec,
    catalog,
    conjugate_oracle,
    format_spec,
    parse_spec,
    parse_spec_with_beta,
    phi_conj_eval,
    phi_conj_subgrad,
    phi_eval,
    validate_spec,
)
from phiquad.errors import DomainError, SpecParseError

from _pool import SPECS

SPEC_IDS = [s.name for s in SPECS]


def test_catalog_has_every_kind():
    assert {s.kind for s in catalog()} == set(CATALOG_KINDS)
    assert len(catalog()) == 8


@pytest.mark.parametrize(("text", "x", "expected"), [
    ("kl", 1.0, 0.0),
    ("pearson_chi2_extended", -1.0, 4.0),
    ("tvd", -0.5, math.inf),
    ("indicator_cvar:alpha=0.75", 3.0, 0.0),
    ("indicator_cvar:alpha=0.75", 4.5, math.inf),
    ("kl", 0.0, 1.0),
    ("tvd_extended", -1.0, 2.0),
])
def test_phi_values(text, x, expected):
    assert phi_eval(parse_spec(text), x) == expected


@pytest.mark.parametrize(("text", "z", "expected"), [
    ("kl", 0.0, 0.0),
    ("tvd_extended", 2.0, math.inf),
    ("pearson_chi2_extended", 2.0, 3.0),
    ("interval_indicator:a=0.5,b=2", -1.0, -0.5),
    ("interval_indicator:a=0.5,b=2", 1.0, 2.0),
    ("indicator_cvar:alpha=0.75", 1.0, 4.0),
    ("kl", 1.0, math.e - 1.0),
])
def test_conjugate_values(text, z, expected):
    assert phi_conj_eval(parse_spec(text), z) == pytest.approx(expected, abs=1e-15)


@pytest.mark.parametrize(("text", "z", "lo", "hi"), [
    ("pearson_chi2_extended", 2.0, 2.0, 2.0),
    ("interval_indicator:a=0.5,b=2", 0.0, 0.5, 2.0),
    ("kl", 0.0, 1.0, 1.0),
    ("indicator_cvar:alpha=0.75", 0.0, 0.0, 4.0),
    ("tvd_extended", 1.0, 1.0, math.inf),
])
def test_conjugate_subgradients(text, z, lo, hi):
    iv = phi_conj_subgrad(parse_spec(text), z)
    assert (iv.lower, iv.upper) == (pytest.approx(lo), pytest.approx(hi)) or (iv.lower, iv.upper) == (lo, hi)
    assert iv.lower <= iv.upper


def test_subgradient_outside_domain_raises():
    with pytest.raises(DomainError):
        phi_conj_subgrad(parse_spec("tvd_extended"), 2.0)


@pytest.mark.parametrize(("text", "z", "grid_kw", "expected", "tol"), [
    ("pearson_chi2_extended", 2.0, dict(lo=-10.0, hi=10.0, step=1e-3), 3.0, 1e-3),
    ("kl", 0.0, dict(lo=1e-4, hi=10.0, step=1e-4), 0.0, 1e-4),
    ("tvd", 0.5, dict(lo=0.0, hi=10.0, step=1e-3), 0.5, 1e-3),
])
def test_conjugate_oracle_examples(text, z, grid_kw, expected, tol):
    assert conjugate_oracle(parse_spec(text), z, **grid_kw) == pytest.approx(expected, abs=tol)


@pytest.mark.parametrize("spec", SPECS, ids=SPEC_IDS)
def test_conjugate_matches_oracle(spec):
    lo, hi = spec.conj_domain()
    zs = np.linspace(max(lo, -3.0) + 1e-3, min(hi, 3.0) - 1e-3, 20)
    for z in zs:
        exact = phi_conj_eval(spec, z)
        # the grid must contain the maximizer, which for kl is exp(z) ~ 20
        approx = conjugate_oracle(spec, z, lo=max(spec.phi_domain()[0], -10.0),
                                  hi=min(spec.phi_domain()[1], 30.0), step=1e-3)
        # the grid sup lower-bounds the conjugate and approaches it at grid resolution
        assert approx <= exact + 1e-12
        assert exact - approx <= 5e-3 * (1.0 + abs(exact))


@pytest.mark.parametrize("spec", SPECS, ids=SPEC_IDS)
def test_fenchel_young(spec):
    xs = np.linspace(-2.0, 4.0, 61)
    zs = np.linspace(-2.0, 2.0, 41)
    for x in xs:
        fx = phi_eval(spec, x)
        if not math.isfinite(fx):
            continue
        for z in zs:
            fz = phi_conj_eval(spec, z)
            if math.isfinite(fz):
                assert fx + fz >= x * z - 1e-9


@pytest.mark.parametrize("spec", SPECS, ids=SPEC_IDS)
def test_fenchel_young_equality_on_subgradient(spec):
    lo, hi = spec.conj_domain()
    for z in np.linspace(max(lo, -2.0), min(hi, 2.0), 17):
        iv = phi_conj_subgrad(spec, z)
        for x in (iv.lower, iv.upper):
            if math.isfinite(x):
                assert phi_eval(spec, x) + phi_conj_eval(spec, z) == pytest.approx(x * z, abs=1e-9)


@pytest.mark.parametrize("spec", SPECS, ids=SPEC_IDS)
def test_subgradients_are_monotone(spec):
    lo, hi = spec.conj_domain()
    zs = np.linspace(max(lo, -3.0), min(hi, 3.0), 101)
    ivs = [phi_conj_subgrad(spec, z) for z in zs]
    for a, b in zip(ivs, ivs[1:]):
        assert a.lower <= a.upper <= b.lower + 1e-12


@pytest.mark.parametrize("spec", [s for s in SPECS if not s.is_extended], ids=lambda s: s.name)
def test_non_extended_conjugate_nondecreasing(spec):
    lo, hi = spec.conj_domain()
    zs = np.linspace(max(lo, -5.0), min(hi, 3.0), 200)
    vals = phi_conj_eval(spec, zs)
    assert np.all(np.diff(vals) >= -1e-12)


@pytest.mark.parametrize("spec", SPECS, ids=SPEC_IDS)
def test_validate_catalog(spec):
    report = validate_spec(spec)
    assert report.ok, report.summary()


def test_validate_reports_extension():
    rep = validate_spec(parse_spec("pearson_chi2_extended"))
    assert rep.summary().splitlines()[0] == "pearson_chi2_extended: extended: true"
    assert math.isfinite(phi_eval(parse_spec("pearson_chi2_extended"), -1.0))
    assert validate_spec(parse_spec("kl")).summary().splitlines()[0] == "kl: extended: false"


def test_validate_flags_broken_phi():
    spec = parse_spec("kl")
    rep = validate_spec(spec, phi=lambda x: spec.phi(x) + 0.1 if x == 1.0 else spec.phi(x))
    assert not rep.ok
    assert rep.failed()[0].startswith("(i)")


def test_validate_flags_nonconvex():
    spec = parse_spec("pearson_chi2_extended")
    rep = validate_spec(spec, phi=lambda x: (x - 1.0) ** 2 + 0.3 * math.sin(6.0 * x) * (x - 1.0) ** 2)
    assert "convexity (midpoint)" in rep.failed()


@pytest.mark.parametrize("text", ["indicator_cvar:alpha=0.75", "interval_indicator:a=0.5,b=2",
                                  "generalized_chi2_expectile:q=0.3", "kl", "tvd_extended"])
def test_parse_format_round_trip(text):
    spec = parse_spec(text)
    assert parse_spec(format_spec(spec)) == spec


def test_parse_with_beta():
    spec, beta = parse_spec_with_beta("pearson_chi2_extended:beta=1")
    assert spec == DivergenceSpec("pearson_chi2_extended") and beta == 1.0
    assert parse_spec_with_beta("kl")[1] is None
    with pytest.raises(SpecParseError):
        parse_spec("kl:beta=1")


@pytest.mark.parametrize("text", ["", "nope", "indicator_cvar", "indicator_cvar:alpha=1.5",
                                  "interval_indicator:a=1.5,b=2", "kl:alpha=0.5", "kl:beta",
                                  "generalized_chi2_expectile:q=x", "pearson_chi2:beta=-1"])
def test_parse_errors(text):
    with pytest.raises(SpecParseError):
        parse_spec_with_beta(text)


def test_arrays_evaluate_elementwise():
    spec = parse_spec("kl")
    xs = np.array([[0.5, 1.0], [2.0, -1.0]])
    out = phi_eval(spec, xs)
    assert out.shape == (2, 2)
    assert out[0, 1] == 0.0 and out[1, 1] == math.inf
    assert phi_conj_eval(spec, np.zeros(3)).tolist() == [0.0, 0.0, 0.0]
