"""Switch between numba-compiled kernels and the plain numpy/Python path.

Set ``PHIQUAD_DISABLE_NUMBA=1`` before import to run every kernel through
CPython. Both paths execute the same source.
"""

from __future__ import annotations

import os

_FLAG = os.environ.get("PHIQUAD_DISABLE_NUMBA", "").strip().lower()
NUMBA_DISABLED = _FLAG not in ("", "0", "false", "no")

try:
    if NUMBA_DISABLED:
        raise ImportError
    from numba import njit as _njit
except ImportError:  # numba missing or switched off
    _njit = None

USING_NUMBA = _njit is not None


def jit(fn):
    """Compile ``fn`` with numba when enabled, otherwise return it untouched."""
    if _njit is None:
        return fn
    return _njit(cache=True)(fn)
