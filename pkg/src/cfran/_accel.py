"""Optional numba acceleration.

Set ``CFRAN_NUMBA=0`` in the environment to force the pure-numpy code
paths. The flag is read once at import time. When numba is importable the
jitted kernels are still built (lazily) so both paths can be benchmarked
side by side.
"""

import os

try:
    import numba
except ImportError:  # pragma: no cover - numba is an optional speedup
    numba = None

HAVE_NUMBA = numba is not None
USE_NUMBA = HAVE_NUMBA and os.environ.get("CFRAN_NUMBA", "1").lower() not in (
    "0",
    "false",
    "no",
    "off",
)


def njit(func):
    """``numba.njit(cache=True)`` if numba is installed, identity otherwise."""
    if HAVE_NUMBA:
        return numba.njit(cache=True)(func)
    return func
