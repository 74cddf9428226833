"""Numba switch for the hot kernels.

Set ``TAU_DISABLE_NUMBA=1`` to force the pure-numpy path (useful when numba
is missing, when debugging, or when comparing both paths in a benchmark).
"""

import os

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

HAS_NUMBA = numba is not None
USE_NUMBA = HAS_NUMBA and os.environ.get("TAU_DISABLE_NUMBA", "0") not in ("1", "true", "yes")


def njit(func):
    """``numba.njit(cache=True)`` when numba is available, identity otherwise."""
    if not HAS_NUMBA:
        return func
    return numba.njit(cache=True)(func)
