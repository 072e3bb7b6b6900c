"""Numba switch.

Kernels are decorated with :func:`njit`.  When numba is missing, or the
environment variable ``SPL_NUMBA`` is set to ``0``, the decorator is the
identity and the kernels run as plain Python over numpy arrays.  Kernels
with a vectorized numpy twin pick it through :data:`USE_NUMBA`.
"""

import os
import warnings

_flag = os.environ.get("SPL_NUMBA", "1").strip().lower()
_requested = _flag not in ("0", "false", "no", "off")

try:
    import numba as _nb
except ImportError:  # pragma: no cover - numba is a hard dependency in CI
    _nb = None
    if _requested:
        warnings.warn("numba not importable; falling back to numpy kernels")

USE_NUMBA = bool(_requested and _nb is not None)


def njit(*args, **kwargs):
    """``numba.njit`` when acceleration is on, a no-op decorator otherwise."""
    if USE_NUMBA:
        kwargs.setdefault("cache", True)
        kwargs.setdefault("nogil", True)
        return _nb.njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]

    def identity(fn):
        return fn

    return identity
