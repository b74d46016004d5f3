"""Backend dispatch for the numeric hot kernels.

Two interchangeable implementations exist: a numba-compiled one and a pure
numpy one. Selection happens once at import time from the environment:

    MASKFUSE_BACKEND=numba   force the compiled kernels (ImportError if absent)
    MASKFUSE_BACKEND=numpy   force the pure-numpy fallback
    MASKFUSE_BACKEND=auto    numba when importable, numpy otherwise (default)

``use_backend`` switches at runtime (used by tests and the benchmark).
Within one backend every kernel is bitwise deterministic; across backends
results agree to floating-point roundoff, not bit-for-bit.
"""
from __future__ import annotations

import os

import numpy as np

_impl = None
_name = ""


def _load(requested: str):
    requested = requested.lower()
    if requested == "numpy":
        from . import numpy_impl
        return numpy_impl, "numpy"
    if requested == "numba":
        from . import numba_impl
        numba_impl.warmup()
        return numba_impl, "numba"
    if requested != "auto":
        raise ValueError(f"unknown kernel backend {requested!r} (use numba, numpy or auto)")
    try:
        from . import numba_impl
    except ImportError:
        from . import numpy_impl
        return numpy_impl, "numpy"
    numba_impl.warmup()
    return numba_impl, "numba"


def use_backend(name: str) -> str:
    """Switch the active backend; returns the name actually selected."""
    global _impl, _name
    _impl, _name = _load(name)
    return _name


def backend_name() -> str:
    return _name


def spatial_propagate(states: np.ndarray, weights: np.ndarray, iters: int) -> np.ndarray:
    states = np.ascontiguousarray(states, dtype=np.float64)
    weights = np.ascontiguousarray(weights, dtype=np.float64)
    return _impl.spatial_propagate(states, weights, int(iters))


def attention_retrieve(query: np.ndarray, keys: np.ndarray, values: np.ndarray) -> np.ndarray:
    query = np.ascontiguousarray(query, dtype=np.float64)
    keys = np.ascontiguousarray(keys, dtype=np.float64)
    values = np.ascontiguousarray(values, dtype=np.float64)
    return _impl.attention_retrieve(query, keys, values)


use_backend(os.environ.get("MASKFUSE_BACKEND", "auto"))
