"""Extended phi-divergence risk quadrangles on finite empirical distributions.

The cvxpy-backed dual oracles and the application solvers live in
:mod:`phiquad.dual` and :mod:`phiquad.applications` and are imported on
demand.
"""

from __future__ import annotations

from phiquad._accel import USING_NUMBA
from phiquad.closed_form import closed_form_quadrangle
from phiquad.divergences import DivergenceSpec, catalog, format_spec, parse_spec, parse_spec_with_beta
from phiquad.empirical import EmpiricalDistribution, load_csv
from phiquad.errors import PhiQuadError
from phiquad.primal import QuadrangleResult, primal_quadrangle

__version__ = "0.1.0"

__all__ = [
    "USING_NUMBA",
    "DivergenceSpec",
    "EmpiricalDistribution",
    "PhiQuadError",
    "QuadrangleResult",
    "catalog",
    "closed_form_quadrangle",
    "format_spec",
    "load_csv",
    "parse_spec",
    "parse_spec_with_beta",
    "primal_quadrangle",
]
