"""Scalar kernels shared by every solver.

Divergences are passed around as ``(kind, a, b)`` triples so the same code
compiles under numba. ``a`` and ``b`` carry the family parameters:

* ``CVAR`` and ``INTERVAL``: ``phi`` is the indicator of ``[a, b]``
  (``a = 0``, ``b = 1/(1 - alpha)`` for the CVaR member).
* ``EXPECTILE``: ``a = q``.
* all others ignore ``a`` and ``b``.

The perspective ``t * conj(y / t)`` is closed at ``t = 0`` by its recession
function, which is the support function of ``dom(phi)``. Minimizing over
``t >= 0`` instead of ``t > 0`` therefore returns the infimum exactly,
including the positively homogeneous families whose infimum sits at ``t = 0``.
"""

from __future__ import annotations

import math

import numpy as np

from phiquad._accel import jit

KL = 0
TVD = 1
TVD_EXT = 2
CHI2 = 3
CHI2_EXT = 4
CVAR = 5
EXPECTILE = 6
INTERVAL = 7

INF = np.inf
_INVPHI = 0.6180339887498949
_EXP_MAX = 709.0


@jit
def phi(kind, a, b, x):
    if kind == KL:
        if x < 0.0:
            return INF
        if x == 0.0:
            return 1.0
        return x * math.log(x) - x + 1.0
    if kind == TVD:
        if x < 0.0:
            return INF
        return abs(x - 1.0)
    if kind == TVD_EXT:
        return abs(x - 1.0)
    if kind == CHI2:
        if x < 0.0:
            return INF
        return (x - 1.0) * (x - 1.0)
    if kind == CHI2_EXT:
        return (x - 1.0) * (x - 1.0)
    if kind == CVAR or kind == INTERVAL:
        if a <= x <= b:
            return 0.0
        return INF
    if kind == EXPECTILE:
        d = x - 1.0
        if d > 0.0:
            return d * d / a
        return d * d / (1.0 - a)
    return INF


@jit
def conj(kind, a, b, z):
    if kind == KL:
        if z > _EXP_MAX:
            return INF
        return math.exp(z) - 1.0
    if kind == TVD:
        if z > 1.0:
            return INF
        if z < -1.0:
            return -1.0
        return z
    if kind == TVD_EXT:
        if z > 1.0 or z < -1.0:
            return INF
        return z
    if kind == CHI2:
        if z < -2.0:
            return -1.0
        return 0.25 * z * z + z
    if kind == CHI2_EXT:
        return 0.25 * z * z + z
    if kind == CVAR or kind == INTERVAL:
        if z >= 0.0:
            return b * z
        return a * z
    if kind == EXPECTILE:
        if z > 0.0:
            return 0.25 * a * z * z + z
        return 0.25 * (1.0 - a) * z * z + z
    return INF


@jit
def conj_dminus(kind, a, b, z):
    """Left derivative of the conjugate at ``z`` (inside its domain)."""
    if kind == KL:
        if z > _EXP_MAX:
            return INF
        return math.exp(z)
    if kind == TVD:
        if z <= -1.0:
            return 0.0
        return 1.0
    if kind == TVD_EXT:
        if z <= -1.0:
            return -INF
        return 1.0
    if kind == CHI2:
        if z <= -2.0:
            return 0.0
        return 0.5 * z + 1.0
    if kind == CHI2_EXT:
        return 0.5 * z + 1.0
    if kind == CVAR or kind == INTERVAL:
        if z > 0.0:
            return b
        return a
    if kind == EXPECTILE:
        if z > 0.0:
            return 0.5 * a * z + 1.0
        return 0.5 * (1.0 - a) * z + 1.0
    return INF


@jit
def conj_dplus(kind, a, b, z):
    """Right derivative of the conjugate at ``z`` (inside its domain)."""
    if kind == KL:
        if z > _EXP_MAX:
            return INF
        return math.exp(z)
    if kind == TVD:
        if z < -1.0:
            return 0.0
        if z >= 1.0:
            return INF
        return 1.0
    if kind == TVD_EXT:
        if z >= 1.0:
            return INF
        return 1.0
    if kind == CHI2:
        if z < -2.0:
            return 0.0
        return 0.5 * z + 1.0
    if kind == CHI2_EXT:
        return 0.5 * z + 1.0
    if kind == CVAR or kind == INTERVAL:
        if z >= 0.0:
            return b
        return a
    if kind == EXPECTILE:
        if z >= 0.0:
            return 0.5 * a * z + 1.0
        return 0.5 * (1.0 - a) * z + 1.0
    return INF


@jit
def conj_d2(kind, a, b, z):
    """Second derivative of the conjugate where it exists (zero on linear pieces)."""
    if kind == KL:
        if z > _EXP_MAX:
            return INF
        return math.exp(z)
    if kind == CHI2:
        if z < -2.0:
            return 0.0
        return 0.5
    if kind == CHI2_EXT:
        return 0.5
    if kind == EXPECTILE:
        if z > 0.0:
            return 0.5 * a
        return 0.5 * (1.0 - a)
    return 0.0


@jit
def phi_domain(kind, a, b):
    if kind == TVD_EXT or kind == CHI2_EXT or kind == EXPECTILE:
        return -INF, INF
    if kind == CVAR or kind == INTERVAL:
        return a, b
    return 0.0, INF


@jit
def conj_domain(kind, a, b):
    if kind == TVD:
        return -INF, 1.0
    if kind == TVD_EXT:
        return -1.0, 1.0
    return -INF, INF


@jit
def persp(kind, a, b, y, t):
    """``t * conj(y / t)`` for ``t > 0``; the recession limit at ``t = 0``."""
    if t <= 0.0:
        if y == 0.0:
            return 0.0
        lo, hi = phi_domain(kind, a, b)
        if y > 0.0:
            if hi == INF:
                return INF
            return hi * y
        if lo == -INF:
            return INF
        return lo * y
    if kind == KL:
        z = y / t
        if z > _EXP_MAX:
            return INF
        return t * (math.exp(z) - 1.0)
    if kind == TVD:
        if y > t:
            return INF
        s = y + t
        if s < 0.0:
            s = 0.0
        return s - t
    if kind == TVD_EXT:
        if y > t or y < -t:
            return INF
        return y
    if kind == CHI2:
        if y < -2.0 * t:
            return -t
        return y * y / (4.0 * t) + y
    if kind == CHI2_EXT:
        return y * y / (4.0 * t) + y
    if kind == CVAR or kind == INTERVAL:
        if y >= 0.0:
            return b * y
        return a * y
    if kind == EXPECTILE:
        if y > 0.0:
            return a * y * y / (4.0 * t) + y
        return (1.0 - a) * y * y / (4.0 * t) + y
    return INF


@jit
def t_lower(kind, a, b, y):
    """Smallest ``t`` keeping every ``y_i / t`` inside ``dom(conj)``."""
    lo = 0.0
    if kind == TVD:
        for i in range(y.shape[0]):
            if y[i] > lo:
                lo = y[i]
    elif kind == TVD_EXT:
        for i in range(y.shape[0]):
            v = abs(y[i])
            if v > lo:
                lo = v
    return lo


@jit
def t_objective(kind, a, b, y, p, beta, t):
    total = t * beta
    for i in range(y.shape[0]):
        v = persp(kind, a, b, y[i], t)
        if v == INF:
            return INF
        total += p[i] * v
    return total


@jit
def minimize_t(kind, a, b, y, p, beta):
    """Minimize ``t*beta + E[persp(y, t)]`` over ``t >= 0``.

    Returns ``(value, t)``. Golden-section search on a bracket that starts at
    the analytic feasibility bound and grows tenfold while the minimizer sits
    on its right edge.
    """
    lo0 = t_lower(kind, a, b, y)
    f_lo = t_objective(kind, a, b, y, p, beta, lo0)
    if kind == CVAR or kind == INTERVAL:
        return f_lo, lo0
    scale = 0.0
    for i in range(y.shape[0]):
        v = abs(y[i])
        if v > scale:
            scale = v
    hi = lo0 + 10.0 * (1.0 + scale)
    best_f = f_lo
    best_t = lo0
    for _ in range(12):
        lo = lo0
        h = hi
        x1 = h - _INVPHI * (h - lo)
        x2 = lo + _INVPHI * (h - lo)
        f1 = t_objective(kind, a, b, y, p, beta, x1)
        f2 = t_objective(kind, a, b, y, p, beta, x2)
        for _it in range(400):
            if h - lo <= 1e-15 * (1.0 + abs(h)):
                break
            if f1 == INF and f2 == INF:
                lo = x2
                x1 = h - _INVPHI * (h - lo)
                x2 = lo + _INVPHI * (h - lo)
                f1 = t_objective(kind, a, b, y, p, beta, x1)
                f2 = t_objective(kind, a, b, y, p, beta, x2)
                continue
            if f1 <= f2:
                h = x2
                x2 = x1
                f2 = f1
                x1 = h - _INVPHI * (h - lo)
                f1 = t_objective(kind, a, b, y, p, beta, x1)
            else:
                lo = x1
                x1 = x2
                f1 = f2
                x2 = lo + _INVPHI * (h - lo)
                f2 = t_objective(kind, a, b, y, p, beta, x2)
        if f1 <= f2:
            tm = x1
            fm = f1
        else:
            tm = x2
            fm = f2
        if fm < best_f:
            best_f = fm
            best_t = tm
        if tm < hi - 1e-3 * (hi - lo0):
            break
        hi = lo0 + 10.0 * (hi - lo0)
    return best_f, best_t


@jit
def shift_objective(kind, a, b, x, p, beta, s, center):
    """``min_t f(s, t) - center`` with ``f(s, t) = s + t*beta + E[persp(x - s, t)]``."""
    y = x - s
    v, t = minimize_t(kind, a, b, y, p, beta)
    return s + v - center, t


@jit
def minimize_shift(kind, a, b, x, p, beta, center):
    """Jointly minimize ``f(s, t)`` by golden section on ``s`` over the inner ``t`` solve.

    Returns ``(value, s, t)`` where ``s`` is the statistic-scale shift.
    """
    xmin = x.min()
    xmax = x.max()
    width = (xmax - xmin) + 1.0
    lo = xmin - width
    hi = xmax + width
    best_f = INF
    best_s = 0.0
    best_t = 0.0
    for _ in range(12):
        l = lo
        h = hi
        x1 = h - _INVPHI * (h - l)
        x2 = l + _INVPHI * (h - l)
        f1, t1 = shift_objective(kind, a, b, x, p, beta, x1, center)
        f2, t2 = shift_objective(kind, a, b, x, p, beta, x2, center)
        for _it in range(400):
            if h - l <= 1e-15 * (1.0 + abs(l) + abs(h)):
                break
            if f1 <= f2:
                h = x2
                x2 = x1
                f2 = f1
                t2 = t1
                x1 = h - _INVPHI * (h - l)
                f1, t1 = shift_objective(kind, a, b, x, p, beta, x1, center)
            else:
                l = x1
                x1 = x2
                f1 = f2
                t1 = t2
                x2 = l + _INVPHI * (h - l)
                f2, t2 = shift_objective(kind, a, b, x, p, beta, x2, center)
        if f1 <= f2:
            sm, fm, tm = x1, f1, t1
        else:
            sm, fm, tm = x2, f2, t2
        if fm < best_f:
            best_f, best_s, best_t = fm, sm, tm
        span = hi - lo
        if sm < lo + 1e-3 * span:
            lo = lo - 10.0 * span
        elif sm > hi - 1e-3 * span:
            hi = hi + 10.0 * span
        else:
            break
    return best_f, best_s, best_t


@jit
def phi_array(kind, a, b, xs):
    out = np.empty(xs.shape[0])
    for i in range(xs.shape[0]):
        out[i] = phi(kind, a, b, xs[i])
    return out


@jit
def conj_array(kind, a, b, zs):
    out = np.empty(zs.shape[0])
    for i in range(zs.shape[0]):
        out[i] = conj(kind, a, b, zs[i])
    return out


@jit
def conj_oracle(kind, a, b, z, grid):
    """Brute-force ``max_x z*x - phi(x)`` over the points of ``grid``."""
    best = -INF
    for i in range(grid.shape[0]):
        v = phi(kind, a, b, grid[i])
        if v == INF:
            continue
        c = z * grid[i] - v
        if c > best:
            best = c
    return best


@jit
def conj_parts(kind, a, b, z):
    """``(conj, left derivative, right derivative, second derivative)`` at every ``z``."""
    n = z.shape[0]
    f = np.empty(n)
    dm = np.empty(n)
    dp = np.empty(n)
    d2 = np.empty(n)
    for i in range(n):
        f[i] = conj(kind, a, b, z[i])
        dm[i] = conj_dminus(kind, a, b, z[i])
        dp[i] = conj_dplus(kind, a, b, z[i])
        d2[i] = conj_d2(kind, a, b, z[i])
    return f, dm, dp, d2


@jit
def certainty_on_grid(kind, a, b, x, p, beta, cgrid, center):
    """``min_C C + V(x - C) - center``: best point of ``cgrid`` refined by golden section
    between its neighbours. Returns ``(value, C)``.

    ``cgrid`` must be evenly spaced and cover ``[min x, max x]``.
    """
    m = cgrid.shape[0]
    best = INF
    k = 0
    # the minimizing C lies in [min x, max x]; one grid step of margin suffices
    step = cgrid[1] - cgrid[0]
    lo_x = x.min() - step
    hi_x = x.max() + step
    for j in range(m):
        if cgrid[j] < lo_x or cgrid[j] > hi_x:
            continue
        v = cgrid[j] + minimize_t(kind, a, b, x - cgrid[j], p, beta)[0]
        if v < best:
            best = v
            k = j
    lo = cgrid[max(k - 1, 0)]
    hi = cgrid[min(k + 1, m - 1)]
    best_c = cgrid[k]
    x1 = hi - _INVPHI * (hi - lo)
    x2 = lo + _INVPHI * (hi - lo)
    f1 = x1 + minimize_t(kind, a, b, x - x1, p, beta)[0]
    f2 = x2 + minimize_t(kind, a, b, x - x2, p, beta)[0]
    for _ in range(100):
        if hi - lo <= 1e-13 * (1.0 + abs(lo) + abs(hi)):
            break
        if f1 <= f2:
            hi = x2
            x2 = x1
            f2 = f1
            x1 = hi - _INVPHI * (hi - lo)
            f1 = x1 + minimize_t(kind, a, b, x - x1, p, beta)[0]
        else:
            lo = x1
            x1 = x2
            f1 = f2
            x2 = lo + _INVPHI * (hi - lo)
            f2 = x2 + minimize_t(kind, a, b, x - x2, p, beta)[0]
    if f1 < best:
        best = f1
        best_c = x1
    if f2 < best:
        best = f2
        best_c = x2
    return best - center, best_c


@jit
def recovery_inner_regret(kind, a, b, x, p, pairing, log_lo, log_hi, cgrid, center):
    """``inf_beta beta + pairing - min_C (C + V_beta(x - C) - center)`` by golden section in ``log beta``.

    Returns ``(value, beta)``. The objective is convex in ``beta``, hence
    unimodal in ``log beta``.
    """
    lo = log_lo
    hi = log_hi
    x1 = hi - _INVPHI * (hi - lo)
    x2 = lo + _INVPHI * (hi - lo)
    f1 = math.exp(x1) + pairing - certainty_on_grid(kind, a, b, x, p, math.exp(x1), cgrid, center)[0]
    f2 = math.exp(x2) + pairing - certainty_on_grid(kind, a, b, x, p, math.exp(x2), cgrid, center)[0]
    for _ in range(90):
        if hi - lo <= 1e-9:
            break
        if f1 <= f2:
            hi = x2
            x2 = x1
            f2 = f1
            x1 = hi - _INVPHI * (hi - lo)
            f1 = math.exp(x1) + pairing - certainty_on_grid(kind, a, b, x, p, math.exp(x1), cgrid, center)[0]
        else:
            lo = x1
            x1 = x2
            f1 = f2
            x2 = lo + _INVPHI * (hi - lo)
            f2 = math.exp(x2) + pairing - certainty_on_grid(kind, a, b, x, p, math.exp(x2), cgrid, center)[0]
    if f1 <= f2:
        return f1, math.exp(x1)
    return f2, math.exp(x2)
