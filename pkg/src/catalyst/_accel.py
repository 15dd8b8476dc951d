"""JIT selection for the simulation kernels.

Kernels are written once in the numba-compatible subset of Python/numpy.
Setting ``CATALYST_DISABLE_NUMBA=1`` (or running without numba installed)
leaves them as plain Python functions operating on numpy arrays.
"""
import os

_FLAG = "CATALYST_DISABLE_NUMBA"


def _env_disabled() -> bool:
    return os.environ.get(_FLAG, "").strip().lower() in {"1", "true", "yes", "on"}


try:
    if _env_disabled():
        raise ImportError
    import numba as _numba
except ImportError:
    _numba = None

USING_NUMBA = _numba is not None


def njit(func):
    """``numba.njit(cache=True)`` when enabled, otherwise the identity."""
    if _numba is None:
        return func
    return _numba.njit(cache=True)(func)


def py_func(func):
    """Return the uncompiled Python body of a kernel."""
    return getattr(func, "py_func", func)
