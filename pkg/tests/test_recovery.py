from __future__ import annotations

import math
import warnings

import numpy as np
import pytest

from phiquad.divergences import parse_spec
from phiquad.errors import GridExhausted, InputError
from phiquad.recovery import ROUTES, divergence_value, recover_all_routes, recover_divergence

KL = parse_spec("kl")
CHI2 = parse_spec("pearson_chi2")


def test_truth_values():
    expected = 0.5 * (0.5 * math.log(0.5) - 0.5 + 1) + 0.5 * (1.5 * math.log(1.5) - 1.5 + 1)
    assert divergence_value(KL, [0.5, 1.5], [0.5, 0.5]) == pytest.approx(expected, abs=1e-15)
    assert divergence_value(CHI2, [0.0, 2.0], [0.5, 0.5]) == 1.0


@pytest.mark.parametrize(("spec", "Q"), [(KL, [0.5, 1.5]), (CHI2, [0.0, 2.0]), (KL, [0.2, 1.8]),
                                         (CHI2, [0.7, 1.3])])
def test_risk_route_recovers(spec, Q):
    res = recover_divergence(spec, Q)
    assert res.relative_error <= 0.05
    assert res.value <= res.truth + 1e-9
    assert not res.grid_exhausted


def test_all_routes_agree():
    res = recover_all_routes(KL, [0.5, 1.5])
    vals = np.array([res[r].value for r in ROUTES])
    assert np.all(vals <= res["risk"].truth + 1e-9)
    assert np.ptp(vals) <= 0.02 * res["risk"].truth


def test_unit_density_gives_zero():
    res = recover_divergence(CHI2, [1.0, 1.0])
    assert abs(res.value) <= 1e-6


def test_weighted_three_atoms():
    p = np.array([0.2, 0.3, 0.5])
    Q = np.array([0.5, 0.5, 1.5])
    Q = Q / float(p @ Q)
    res = recover_divergence(KL, Q, p, route="deviation")
    assert res.relative_error <= 0.05 and res.value <= res.truth + 1e-9


def test_grid_exhaustion_warns():
    with pytest.warns(GridExhausted):
        res = recover_divergence(CHI2, [0.0, 2.0], half_width=0.05, points=11, refinements=0)
    assert res.grid_exhausted and res.value < res.truth


@pytest.mark.parametrize(("spec", "Q", "probs"), [
    (parse_spec("pearson_chi2_extended"), [0.0, 2.0], None),
    (KL, [1.0], None),
    (KL, [1.0] * 5, None),
    (KL, [0.5, 1.0], None),
    (KL, [-0.5, 2.5], None),
    (KL, [0.5, 1.5], [0.5, 0.4]),
])
def test_input_errors(spec, Q, probs):
    with pytest.raises(InputError):
        recover_divergence(spec, Q, probs)


def test_bad_route():
    with pytest.raises(InputError):
        recover_divergence(KL, [0.5, 1.5], route="nope")
