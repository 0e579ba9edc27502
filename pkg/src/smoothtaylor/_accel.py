"""Numba detection and the switch between compiled and pure-numpy kernels.

Set ``SMOOTHTAYLOR_DISABLE_NUMBA=1`` (or numba's own ``NUMBA_DISABLE_JIT=1``)
before import to force the numpy fallback path.
"""

import os

_TRUTHY = {"1", "true", "yes", "on"}


def _flag(name):
    return os.environ.get(name, "").strip().lower() in _TRUTHY


try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

NUMBA_AVAILABLE = numba is not None
USE_NUMBA = NUMBA_AVAILABLE and not (
    _flag("SMOOTHTAYLOR_DISABLE_NUMBA") or _flag("NUMBA_DISABLE_JIT")
)
BACKEND = "numba" if USE_NUMBA else "numpy"


def njit(fn):
    """Compile ``fn`` with numba when available, otherwise return it untouched.

    The returned object is always callable from Python, so kernels written
    as explicit loops still work (slowly) without numba.
    """
    if not NUMBA_AVAILABLE:
        return fn
    return numba.njit(cache=True, nogil=True)(fn)
