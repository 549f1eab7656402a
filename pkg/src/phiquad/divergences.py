"""Catalog of (extended) divergence functions and their convex conjugates.

Each entry pins one representative of its equivalence class
``phi(x) + k(x - 1)``: the member with ``phi(1) = 0`` and ``0`` in the
subdifferential at ``1``. Catalog entries are addressed by strings of the
form ``name:key=value,...``::

    kl
    indicator_cvar:alpha=0.75
    interval_indicator:a=0.5,b=2.0
    generalized_chi2_expectile:q=0.75

Values are plain floats; ``math.inf`` stands for ``+inf`` and ``-inf`` never
comes out of ``phi`` or ``phi_conj``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from phiquad import kernels as K
from phiquad.errors import DomainError, SpecParseError

_KIND_CODES = {
    "kl": K.KL,
    "tvd": K.TVD,
    "tvd_extended": K.TVD_EXT,
    "pearson_chi2": K.CHI2,
    "pearson_chi2_extended": K.CHI2_EXT,
    "indicator_cvar": K.CVAR,
    "generalized_chi2_expectile": K.EXPECTILE,
    "interval_indicator": K.INTERVAL,
}

_PARAM_NAMES = {
    "indicator_cvar": ("alpha",),
    "generalized_chi2_expectile": ("q",),
    "interval_indicator": ("a", "b"),
}

EXTENDED_KINDS = frozenset({"tvd_extended", "pearson_chi2_extended", "generalized_chi2_expectile"})
# conjugates that are C^1 on their domain
SMOOTH_KINDS = frozenset({"kl", "pearson_chi2", "pearson_chi2_extended", "generalized_chi2_expectile"})
HOMOGENEOUS_KINDS = frozenset({"indicator_cvar", "interval_indicator"})

CATALOG_KINDS = tuple(_KIND_CODES)


@dataclass(frozen=True)
class SubgradientInterval:
    lower: float
    upper: float

    def contains(self, v: float, tol: float = 0.0) -> bool:
        return self.lower - tol <= v <= self.upper + tol

    @property
    def is_point(self) -> bool:
        return self.lower == self.upper


@dataclass(frozen=True)
class DivergenceSpec:
    """One catalog entry: ``phi``, its conjugate and parameters."""

    kind: str
    params: tuple[tuple[str, float], ...] = ()
    name: str = field(default="", compare=False)

    def __post_init__(self):
        if self.kind not in _KIND_CODES:
            raise SpecParseError(f"unknown divergence {self.kind!r}; known: {', '.join(CATALOG_KINDS)}")
        expected = _PARAM_NAMES.get(self.kind, ())
        got = tuple(k for k, _ in self.params)
        if set(got) != set(expected):
            raise SpecParseError(f"{self.kind} takes parameters {expected}, got {got}")
        p = dict(self.params)
        if self.kind == "indicator_cvar" and not 0.0 < p["alpha"] < 1.0:
            raise SpecParseError("indicator_cvar needs 0 < alpha < 1")
        if self.kind == "generalized_chi2_expectile" and not 0.0 < p["q"] < 1.0:
            raise SpecParseError("generalized_chi2_expectile needs 0 < q < 1")
        if self.kind == "interval_indicator" and not 0.0 < p["a"] < 1.0 < p["b"]:
            raise SpecParseError("interval_indicator needs 0 < a < 1 < b")
        # canonical parameter order
        object.__setattr__(self, "params", tuple((k, float(p[k])) for k in expected))
        if not self.name:
            object.__setattr__(self, "name", format_spec(self))

    def param(self, key: str) -> float:
        return dict(self.params)[key]

    @property
    def code(self) -> int:
        return _KIND_CODES[self.kind]

    @property
    def kernel_args(self) -> tuple[int, float, float]:
        """``(kind, a, b)`` as consumed by :mod:`phiquad.kernels`."""
        if self.kind == "indicator_cvar":
            return K.CVAR, 0.0, 1.0 / (1.0 - self.param("alpha"))
        if self.kind == "interval_indicator":
            return K.INTERVAL, self.param("a"), self.param("b")
        if self.kind == "generalized_chi2_expectile":
            return K.EXPECTILE, self.param("q"), 0.0
        return self.code, 0.0, 0.0

    @property
    def is_extended(self) -> bool:
        return self.kind in EXTENDED_KINDS

    @property
    def is_smooth(self) -> bool:
        return self.kind in SMOOTH_KINDS

    @property
    def is_homogeneous(self) -> bool:
        return self.kind in HOMOGENEOUS_KINDS

    def phi(self, x):
        return phi_eval(self, x)

    def conj(self, z):
        return phi_conj_eval(self, z)

    def conj_subgrad(self, z: float) -> SubgradientInterval:
        return phi_conj_subgrad(self, z)

    def phi_domain(self) -> tuple[float, float]:
        k, a, b = self.kernel_args
        lo, hi = K.phi_domain(k, a, b)
        return float(lo), float(hi)

    def conj_domain(self) -> tuple[float, float]:
        k, a, b = self.kernel_args
        lo, hi = K.conj_domain(k, a, b)
        return float(lo), float(hi)

    def kinks(self) -> tuple[float, ...]:
        """Points where the conjugate is not differentiable (domain ends included)."""
        if self.kind == "tvd":
            return (-1.0, 1.0)
        if self.kind == "tvd_extended":
            return (-1.0, 1.0)
        if self.kind in HOMOGENEOUS_KINDS:
            return (0.0,)
        return ()


def format_spec(spec: DivergenceSpec) -> str:
    if not spec.params:
        return spec.kind
    return spec.kind + ":" + ",".join(f"{k}={v:g}" for k, v in spec.params)


def parse_spec_with_beta(text: str) -> tuple[DivergenceSpec, float | None]:
    """Parse ``name:key=value,...``; a ``beta`` key is split off and returned."""
    text = text.strip()
    if not text:
        raise SpecParseError("empty divergence spec")
    name, _, rest = text.partition(":")
    name = name.strip()
    params: dict[str, float] = {}
    if rest.strip():
        for item in rest.split(","):
            key, eq, value = item.partition("=")
            if not eq:
                raise SpecParseError(f"malformed parameter {item!r} in {text!r}")
            try:
                params[key.strip()] = float(value)
            except ValueError:
                raise SpecParseError(f"non-numeric value for {key.strip()!r} in {text!r}") from None
    beta = params.pop("beta", None)
    if beta is not None and not beta > 0.0:
        raise SpecParseError("beta must be positive")
    return DivergenceSpec(name, tuple(params.items())), beta


def parse_spec(text: str) -> DivergenceSpec:
    spec, beta = parse_spec_with_beta(text)
    if beta is not None:
        raise SpecParseError("beta belongs to the run, not the divergence; use parse_spec_with_beta")
    return spec


def catalog(alpha: float = 0.75, q: float = 0.75, a: float = 0.5, b: float = 2.0) -> list[DivergenceSpec]:
    """All eight catalog entries with the given family parameters."""
    return [
        DivergenceSpec("kl"),
        DivergenceSpec("tvd"),
        DivergenceSpec("tvd_extended"),
        DivergenceSpec("pearson_chi2"),
        DivergenceSpec("pearson_chi2_extended"),
        DivergenceSpec("indicator_cvar", (("alpha", alpha),)),
        DivergenceSpec("generalized_chi2_expectile", (("q", q),)),
        DivergenceSpec("interval_indicator", (("a", a), ("b", b))),
    ]


def phi_eval(spec: DivergenceSpec, x):
    """``phi(x)``; ``+inf`` outside the effective domain. Accepts scalars or arrays."""
    k, a, b = spec.kernel_args
    if np.ndim(x) == 0:
        return float(K.phi(k, a, b, float(x)))
    xs = np.asarray(x, dtype=float)
    return K.phi_array(k, a, b, xs.ravel()).reshape(xs.shape)


def phi_conj_eval(spec: DivergenceSpec, z):
    """``phi*(z) = sup_x z*x - phi(x)`` from the closed-form catalog conjugate."""
    k, a, b = spec.kernel_args
    if np.ndim(z) == 0:
        return float(K.conj(k, a, b, float(z)))
    zs = np.asarray(z, dtype=float)
    return K.conj_array(k, a, b, zs.ravel()).reshape(zs.shape)


def phi_conj_subgrad(spec: DivergenceSpec, z: float) -> SubgradientInterval:
    """One-sided derivatives of ``phi*`` at ``z``.

    Raises:
        DomainError: if ``phi*(z) = +inf``.
    """
    k, a, b = spec.kernel_args
    z = float(z)
    if math.isinf(K.conj(k, a, b, z)):
        raise DomainError(f"{spec.name}: conjugate is +inf at z={z}")
    return SubgradientInterval(float(K.conj_dminus(k, a, b, z)), float(K.conj_dplus(k, a, b, z)))


def default_grid(spec: DivergenceSpec, step: float = 1e-3) -> np.ndarray:
    lo, hi = spec.phi_domain()
    lo = max(lo, -10.0)
    hi = min(hi, 10.0)
    n = int(round((hi - lo) / step))
    grid = np.linspace(lo, hi, n + 1)
    if spec.kind in HOMOGENEOUS_KINDS:
        grid = np.union1d(grid, [lo, hi])
    return grid


def conjugate_oracle(spec: DivergenceSpec, z: float, grid: np.ndarray | None = None,
                     lo: float | None = None, hi: float | None = None, step: float = 1e-3) -> float:
    """Brute-force ``max_x z*x - phi(x)`` over a grid; a test oracle for :func:`phi_conj_eval`.

    Either pass ``grid`` directly or a range ``[lo, hi]`` with ``step``.
    """
    if grid is None:
        if lo is None or hi is None:
            grid = default_grid(spec, step)
        else:
            grid = np.linspace(lo, hi, int(round((hi - lo) / step)) + 1)
    k, a, b = spec.kernel_args
    return float(K.conj_oracle(k, a, b, float(z), np.asarray(grid, dtype=float)))


@dataclass(frozen=True)
class AxiomCheck:
    axiom: str
    passed: bool
    detail: str = ""


@dataclass(frozen=True)
class ValidationReport:
    spec_name: str
    extended: bool
    checks: tuple[AxiomCheck, ...]

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks)

    def failed(self) -> list[str]:
        return [c.axiom for c in self.checks if not c.passed]

    def summary(self) -> str:
        lines = [f"{self.spec_name}: extended: {str(self.extended).lower()}"]
        for c in self.checks:
            lines.append(f"  [{'pass' if c.passed else 'FAIL'}] {c.axiom} {c.detail}".rstrip())
        return "\n".join(lines)


def validate_spec(spec, phi=None) -> ValidationReport:
    """Check the divergence-function axioms on probe grids.

    ``phi`` overrides the catalog function (used to exercise deliberately
    broken entries). Failures are reported, never raised.
    """
    f = phi if phi is not None else spec.phi
    name = spec.name if isinstance(spec, DivergenceSpec) else str(spec)

    def ev(x):
        return float(f(float(x)))

    grid_ext = np.round(np.arange(-500, 501) * 1e-2, 12)
    values = np.array([ev(x) for x in grid_ext])
    finite_neg = bool(np.any(np.isfinite(values[grid_ext < 0])))
    claims_extended = spec.is_extended if isinstance(spec, DivergenceSpec) else finite_neg
    checks = []

    v1 = ev(1.0)
    checks.append(AxiomCheck("(i) phi(1) = 0", v1 == 0.0, f"phi(1)={v1:g}"))
    near = (ev(1.0 - 1e-3), ev(1.0 + 1e-3))
    checks.append(AxiomCheck("1 in int dom(phi)", all(math.isfinite(v) for v in near),
                             f"phi(1-1e-3)={near[0]:g}, phi(1+1e-3)={near[1]:g}"))
    probe = values[np.isfinite(values)]
    checks.append(AxiomCheck("0 in subdiff phi(1)", bool(np.all(probe >= -1e-15)),
                             f"min phi on grid={probe.min():g}"))
    worst = 0.0
    for k in (1, 10, 100):
        left, mid, right = values[:-2 * k], values[k:-k], values[2 * k:]
        ok = np.isfinite(left) & np.isfinite(right)
        if np.any(ok):
            gap = mid[ok] - 0.5 * (left[ok] + right[ok])
            worst = max(worst, float(np.max(gap)))
    checks.append(AxiomCheck("convexity (midpoint)", worst <= 1e-12, f"max midpoint excess={worst:.3g}"))
    if claims_extended:
        checks.append(AxiomCheck("extended: phi finite on some x < 0", finite_neg,
                                 f"phi(-1)={ev(-1.0):g}"))
    else:
        checks.append(AxiomCheck("non-extended: phi = +inf for x < 0", not finite_neg))
    return ValidationReport(name, claims_extended, tuple(checks))
