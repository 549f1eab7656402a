"""Finite weighted-atom random variables and their elementary statistics."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from phiquad.errors import DegenerateInput, InputError

_BISECT_TOL = 1e-12
_BISECT_ITERS = 200


@dataclass(frozen=True, eq=False)
class EmpiricalDistribution:
    """Outcomes ``values[i]`` with probabilities ``probs[i]``.

    Atoms are kept in the order given; nothing is merged or sorted.
    """

    values: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float).ravel()
        p = np.array(self.probs, dtype=float).ravel()
        if v.size == 0:
            raise InputError("distribution needs at least one atom")
        if v.shape != p.shape:
            raise InputError(f"{v.size} values but {p.size} probabilities")
        if not np.all(np.isfinite(v)):
            raise InputError("atom values must be finite")
        if not np.all(p > 0.0):
            raise InputError("probabilities must be strictly positive")
        if abs(p.sum() - 1.0) > 1e-12:
            raise InputError(f"probabilities sum to {p.sum():.15g}, not 1")
        v.setflags(write=False)
        p.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "probs", p)

    @classmethod
    def uniform(cls, values) -> EmpiricalDistribution:
        v = np.asarray(values, dtype=float).ravel()
        return cls(v, np.full(v.size, 1.0 / v.size))

    @classmethod
    def weighted(cls, values, weights) -> EmpiricalDistribution:
        """Build from unnormalized positive weights."""
        w = np.asarray(weights, dtype=float).ravel()
        return cls(values, w / w.sum())

    def __len__(self) -> int:
        return self.values.size

    def __repr__(self) -> str:
        return f"EmpiricalDistribution(n={len(self)}, values={self.values.tolist()}, probs={self.probs.tolist()})"

    def with_values(self, values) -> EmpiricalDistribution:
        """Same atoms and probabilities, new outcomes."""
        return EmpiricalDistribution(np.asarray(values, dtype=float), self.probs)

    def shift(self, c: float) -> EmpiricalDistribution:
        return self.with_values(self.values + c)

    def scale(self, k: float) -> EmpiricalDistribution:
        return self.with_values(self.values * k)

    @property
    def is_constant(self) -> bool:
        return bool(self.values.max() == self.values.min())

    def mean(self) -> float:
        return expectation(self)


def as_distribution(X, probs=None) -> EmpiricalDistribution:
    """Coerce arrays (uniform or with ``probs``) into an :class:`EmpiricalDistribution`."""
    if isinstance(X, EmpiricalDistribution):
        return X
    if probs is None:
        return EmpiricalDistribution.uniform(X)
    return EmpiricalDistribution(X, probs)


def expectation(X: EmpiricalDistribution) -> float:
    return float(np.dot(X.probs, X.values))


def std_dev(X: EmpiricalDistribution) -> float:
    """Population standard deviation."""
    d = X.values - expectation(X)
    return math.sqrt(float(np.dot(X.probs, d * d)))


def l2_norm(X: EmpiricalDistribution) -> float:
    return math.sqrt(float(np.dot(X.probs, X.values * X.values)))


def ess_sup(X: EmpiricalDistribution) -> float:
    return float(X.values.max())


def ess_inf(X: EmpiricalDistribution) -> float:
    return float(X.values.min())


def _sorted(X: EmpiricalDistribution) -> tuple[np.ndarray, np.ndarray]:
    order = np.argsort(X.values, kind="stable")
    return X.values[order], X.probs[order]


def var(X: EmpiricalDistribution, alpha: float) -> float:
    """Lower ``alpha``-quantile ``inf{x : P(X <= x) >= alpha}``; ``alpha = 0`` gives ``ess_inf``."""
    return var_interval(X, alpha)[0]


def var_interval(X: EmpiricalDistribution, alpha: float) -> tuple[float, float]:
    """``[lower, upper]`` ``alpha``-quantiles.

    The two differ only when the distribution function sits exactly at
    ``alpha`` on a flat stretch; then every point in between is a quantile.
    """
    if not 0.0 <= alpha < 1.0:
        raise ValueError(f"alpha must be in [0, 1), got {alpha}")
    v, p = _sorted(X)
    cum = np.cumsum(p)
    tol = 1e-12
    i = int(np.searchsorted(cum, alpha - tol, side="left"))
    i = min(i, v.size - 1)
    lo = float(v[i]) if alpha > 0.0 else float(v[0])
    j = int(np.searchsorted(cum, alpha + tol, side="right"))
    j = min(j, v.size - 1)
    hi = float(v[j])
    return lo, max(lo, hi)


def cvar(X: EmpiricalDistribution, alpha: float) -> float:
    """Average of the worst ``1 - alpha`` probability mass, splitting the boundary atom."""
    if not 0.0 <= alpha < 1.0:
        raise ValueError(f"alpha must be in [0, 1), got {alpha}")
    v, p = _sorted(X)
    tail = 1.0 - alpha
    total = 0.0
    left = tail
    for k in range(v.size - 1, -1, -1):
        take = min(p[k], left)
        total += take * v[k]
        left -= take
        if left <= 0.0:
            break
    # rounding can leave a sliver of mass unassigned; it sits at the lowest atom taken
    if left > 0.0:
        total += left * v[0]
    return float(total / tail)


def cvar_rockafellar_uryasev(X: EmpiricalDistribution, alpha: float) -> float:
    """``min_C C + E[X - C]_+ / (1 - alpha)``, evaluated at every atom (the minimum sits on one)."""
    k = 1.0 / (1.0 - alpha)
    best = math.inf
    for c in X.values:
        val = c + k * float(np.dot(X.probs, np.maximum(X.values - c, 0.0)))
        best = min(best, val)
    return best


def _bisect(fn, lo: float, hi: float) -> float:
    """Root of a nondecreasing ``fn`` on ``[lo, hi]`` with ``fn(lo) <= 0 <= fn(hi)``."""
    for _ in range(_BISECT_ITERS):
        mid = 0.5 * (lo + hi)
        val = fn(mid)
        if abs(val) <= _BISECT_TOL:
            return mid
        if val < 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * (1.0 + abs(mid)):
            break
    return 0.5 * (lo + hi)


def second_order_ratio(X: EmpiricalDistribution, q: float) -> float:
    """``||(X - q)_+||_1 / ||(X - q)_+||_2``; nonincreasing in ``q`` below ``ess_sup``."""
    pos = np.maximum(X.values - q, 0.0)
    l2 = math.sqrt(float(np.dot(X.probs, pos * pos)))
    if l2 == 0.0:
        return math.nan
    return float(np.dot(X.probs, pos)) / l2


def second_order_quantile(X: EmpiricalDistribution, alpha: float) -> float:
    """Root ``q`` of ``1 - alpha = ||(X - q)_+||_1 / ||(X - q)_+||_2``.

    The ratio falls from 1 (as ``q -> -inf``) to ``sqrt(P(X = ess_sup))`` (as
    ``q -> ess_sup``). When ``1 - alpha`` is at or below that floor there is
    no root and the minimizer of ``q + ||(X - q)_+||_2 / (1 - alpha)`` is
    ``ess_sup`` itself, which is returned.

    Raises:
        DegenerateInput: for constant ``X``.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    if X.is_constant:
        raise DegenerateInput("second-order quantile needs a nonconstant X")
    target = 1.0 - alpha
    top = ess_sup(X)
    p_top = float(X.probs[X.values == top].sum())
    if target <= math.sqrt(p_top):
        return top
    span = top - ess_inf(X)
    lo = ess_inf(X) - 1.0
    while second_order_ratio(X, lo) < target:
        lo -= span + (ess_inf(X) - lo)
    hi = top
    # ratio is nonincreasing, so bisect on target - ratio
    return _bisect(lambda q: target - _ratio_left(X, q, top), lo, hi)


def _ratio_left(X: EmpiricalDistribution, q: float, top: float) -> float:
    if q >= top:
        p_top = float(X.probs[X.values == top].sum())
        return math.sqrt(p_top)
    return second_order_ratio(X, q)


def expectile_residual(X: EmpiricalDistribution, q: float, c: float) -> float:
    """``q E[(X - C)_+] - (1 - q) E[(X - C)_-]``; nonincreasing in ``C``."""
    d = X.values - c
    return q * float(np.dot(X.probs, np.maximum(d, 0.0))) - (1.0 - q) * float(np.dot(X.probs, np.maximum(-d, 0.0)))


def expectile(X: EmpiricalDistribution, q: float) -> float:
    """The ``q``-expectile, by bisection on ``[ess_inf, ess_sup]``."""
    if not 0.0 < q < 1.0:
        raise ValueError(f"q must be in (0, 1), got {q}")
    if X.is_constant:
        return ess_inf(X)
    return _bisect(lambda c: -expectile_residual(X, q, c), ess_inf(X), ess_sup(X))


def load_csv(path) -> EmpiricalDistribution:
    """Read ``value`` or ``value,prob`` columns; a header row is required.

    A single column gets uniform probabilities. Two columns are read as
    outcomes and probabilities, which are renormalized if off by rounding.
    """
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from None
    if len(rows) < 2:
        raise InputError(f"{path}: need a header row and at least one data row")
    header = [h.strip() for h in rows[0]]
    if _is_number(header[0]):
        raise InputError(f"{path}: header row missing")
    if len(header) not in (1, 2):
        raise InputError(f"{path}: expected 1 or 2 columns, got {len(header)}")
    try:
        data = np.array([[float(c) for c in r] for r in rows[1:]], dtype=float)
    except ValueError as exc:
        raise InputError(f"{path}: {exc}") from None
    if data.ndim != 2 or data.shape[1] != len(header):
        raise InputError(f"{path}: ragged rows")
    if data.shape[1] == 1:
        return EmpiricalDistribution.uniform(data[:, 0])
    probs = data[:, 1]
    if np.any(probs <= 0.0):
        raise InputError(f"{path}: probabilities must be positive")
    if abs(probs.sum() - 1.0) > 1e-6:
        raise InputError(f"{path}: probabilities sum to {probs.sum():g}")
    return EmpiricalDistribution.weighted(data[:, 0], probs)


def _is_number(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def save_csv(X: EmpiricalDistribution, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["value", "prob"])
        for v, p in zip(X.values, X.probs):
            w.writerow([repr(float(v)), repr(float(p))])
