"""Optional numba acceleration.

Set ``DRIFTLAB_DISABLE_NUMBA=1`` to force the pure Python / numpy kernels.
"""

import os

_DISABLE = os.environ.get("DRIFTLAB_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes")

try:
    if _DISABLE:
        raise ImportError
    from numba import njit as _njit

    HAVE_NUMBA = True
except ImportError:
    _njit = None
    HAVE_NUMBA = False


def jit(fn):
    """Compile ``fn`` with numba when enabled; otherwise return it unchanged."""
    if HAVE_NUMBA:
        return _njit(cache=True, nogil=True)(fn)
    return fn
