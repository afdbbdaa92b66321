"""Backend selection for the hot kernels.

``VCPAY_ACCEL`` picks the implementation at call time:

* ``numba`` (default) — kernels are ``@njit``-compiled on first use and
  cached on disk; falls back to numpy automatically when numba cannot be
  imported.
* ``numpy`` — pure numpy/Python path, no JIT warm-up cost.

Both paths produce bit-identical results; ``vcpay bench`` compares them.
"""

from __future__ import annotations

import os
from typing import Callable

ENV_FLAG = "VCPAY_ACCEL"

_jit_cache: dict[Callable, Callable] = {}
_numba_import_failed = False


def requested_backend() -> str:
    value = os.environ.get(ENV_FLAG, "numba").strip().lower()
    if value not in ("numba", "numpy"):
        raise ValueError(f"{ENV_FLAG} must be 'numba' or 'numpy', got {value!r}")
    return value


def active_backend() -> str:
    """The backend that will actually run: honors the flag and availability."""
    if requested_backend() == "numpy":
        return "numpy"
    return "numpy" if _numba_import_failed and not _try_import() else _backend_if_numba()


def _backend_if_numba() -> str:
    return "numba" if _try_import() else "numpy"


def _try_import() -> bool:
    global _numba_import_failed
    if _numba_import_failed:
        return False
    try:
        import numba  # noqa: F401
    except ImportError:
        _numba_import_failed = True
        return False
    return True


def jit_compile(fn: Callable) -> Callable:
    """Return the cached ``@njit`` build of `fn`, compiling lazily."""
    compiled = _jit_cache.get(fn)
    if compiled is None:
        from numba import njit

        compiled = njit(cache=True)(fn)
        _jit_cache[fn] = compiled
    return compiled


def dispatch(py_fn: Callable, numpy_fn: Callable | None = None) -> Callable:
    """Build a call-time dispatcher between the jitted loop and the numpy path.

    `py_fn` is the plain-Python loop kernel (the ``@njit`` source); `numpy_fn`
    is the vectorized fallback, defaulting to the uncompiled loop when no
    vectorized formulation exists.
    """
    fallback = numpy_fn if numpy_fn is not None else py_fn

    def call(*args):
        if active_backend() == "numba":
            return jit_compile(py_fn)(*args)
        return fallback(*args)

    call.__name__ = py_fn.__name__
    call.py_fn = py_fn
    call.numpy_fn = fallback
    return call
