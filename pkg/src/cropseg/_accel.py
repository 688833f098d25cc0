"""Numba switch.

Set ``CROPSEG_DISABLE_NUMBA=1`` to force the pure-numpy kernels. When numba
is not importable the numpy kernels are used as well.
"""
import os

try:
    import numba
except ImportError:  # pragma: no cover
    numba = None

NUMBA_AVAILABLE = numba is not None
NUMBA_DISABLED = os.environ.get("CROPSEG_DISABLE_NUMBA", "").strip().lower() not in ("", "0", "false", "no")
USE_NUMBA = NUMBA_AVAILABLE and not NUMBA_DISABLED


def njit(func):
    """``numba.njit(cache=True)`` when numba is importable, identity otherwise."""
    if not NUMBA_AVAILABLE:
        return func
    return numba.njit(cache=True)(func)


def backend_name():
    return "numba" if USE_NUMBA else "numpy"
