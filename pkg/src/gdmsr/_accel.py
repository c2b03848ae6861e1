"""Backend selection for the hot kernels.

Set ``GDMSR_DISABLE_NUMBA=1`` to force the pure-numpy path.
"""

import os

USE_NUMBA = os.environ.get("GDMSR_DISABLE_NUMBA", "0").lower() not in ("1", "true", "yes")

try:
    from numba import njit as _njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False
    _njit = None

if not HAVE_NUMBA:
    USE_NUMBA = False


def njit(*args, **kwargs):
    """``numba.njit`` when available, identity decorator otherwise."""
    if HAVE_NUMBA:
        return _njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return lambda f: f


def backend() -> str:
    return "numba" if USE_NUMBA else "numpy"
