"""Backend switch for the hot kernels.

Set ``KICKPEND_PURE_NUMPY=1`` before import to run every kernel as plain
Python/numpy (useful for debugging and for benchmarking the JIT gain).
"""

import os

_FLAG = os.environ.get("KICKPEND_PURE_NUMPY", "").strip().lower()
USE_NUMBA = _FLAG not in ("1", "true", "yes", "on")

if USE_NUMBA:
    try:
        from numba import njit
    except ImportError:  # pragma: no cover
        USE_NUMBA = False

BACKEND = "numba" if USE_NUMBA else "numpy"


def kernel(fn):
    """Compile ``fn`` with numba when enabled, otherwise return it untouched."""
    if USE_NUMBA:
        return njit(cache=True, nogil=True)(fn)
    return fn
