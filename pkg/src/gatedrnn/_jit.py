"""Numba switch.

Hot kernels are decorated with :func:`njit` from this module.  When numba is
importable and ``GATEDRNN_JIT`` is not set to ``0``, they are compiled in
nopython mode; otherwise the decorator is a no-op and the very same function
bodies run as plain vectorised numpy.
"""

import os

_FLAG = os.environ.get("GATEDRNN_JIT", "1").strip().lower()

try:
    if _FLAG in ("0", "false", "no", "off"):
        raise ImportError("numba disabled by GATEDRNN_JIT")
    import numba as _numba

    JIT_ENABLED = True
except ImportError:
    _numba = None
    JIT_ENABLED = False


def njit(*args, **kwargs):
    """``numba.njit`` when available, identity decorator otherwise."""
    if JIT_ENABLED:
        kwargs.setdefault("cache", True)
        kwargs.setdefault("nogil", True)
        return _numba.njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return lambda fn: fn


def backend() -> str:
    return "numba" if JIT_ENABLED else "numpy"
