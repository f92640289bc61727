"""Optional numba acceleration for the hot loops.

Kernels in :mod:`combmem.kernels` come in two flavours: an explicit-loop
version compiled with ``numba.njit`` and a vectorised numpy version. The numba
path is used when numba imports and ``COMBMEM_DISABLE_NUMBA`` is unset (or
``0``). Set ``COMBMEM_DISABLE_NUMBA=1`` before import to force numpy.
"""
import os

_FLAG = os.environ.get("COMBMEM_DISABLE_NUMBA", "").strip().lower()
DISABLED_BY_ENV = _FLAG not in ("", "0", "false", "no")

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

USE_NUMBA = numba is not None and not DISABLED_BY_ENV


def njit(func):
    """Compile ``func`` with numba when it is available, else return None."""
    if numba is None:
        return None
    return numba.njit(cache=True, nogil=True)(func)


def backend_name():
    return "numba" if USE_NUMBA else "numpy"
