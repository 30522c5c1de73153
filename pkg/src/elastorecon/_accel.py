"""
Numba shim.

Hot kernels are written twice: an ``@njit`` loop version and a vectorized
numpy version. ``ELASTORECON_NO_NUMBA=1`` forces the numpy path even when
numba is importable.
"""
import os
import warnings

_disabled = os.environ.get("ELASTORECON_NO_NUMBA", "").strip().lower() in ("1", "true", "yes")

try:
    if _disabled:
        raise ImportError
    from numba import njit, prange

    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False
    prange = range

    def njit(*args, **kw):
        if len(args) == 1 and callable(args[0]) and not kw:
            return args[0]
        return lambda f: f

    if not _disabled:
        warnings.warn("numba is not installed - assembly kernels fall back to numpy")


def backend():
    """Name of the active kernel backend."""
    return "numba" if HAVE_NUMBA else "numpy"
