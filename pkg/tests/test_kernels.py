"""Backend selection and numba/numpy parity of the two hot kernels."""
import os
import subprocess
import sys

import numpy as np

from maskfuse import kernels


def random_propagate_instance(rng):
    n = int(rng.integers(1, 7))
    p = int(rng.integers(1, 120))
    states = rng.random((n, p))
    w = rng.random((n, n))
    w = (w + w.T) / 2
    np.fill_diagonal(w, 0.0)
    iters = int(rng.integers(1, 4))
    return states, w, iters


def random_retrieve_instance(rng):
    c = int(rng.integers(1, 5))
    p = int(rng.integers(1, 50))
    r = int(rng.integers(1, 4))
    q = rng.normal(size=(p, c))
    keys = rng.normal(size=(r, p, c))
    values = rng.random((r, p))
    return q, keys, values


def test_backend_switching_round_trip():
    start = kernels.backend_name()
    try:
        kernels.use_backend("numpy")
        assert kernels.backend_name() == "numpy"
        kernels.use_backend("numba")
        assert kernels.backend_name() == "numba"
        kernels.use_backend("auto")
        assert kernels.backend_name() in ("numba", "numpy")
    finally:
        kernels.use_backend(start)


def test_propagate_parity_across_backends():
    rng = np.random.default_rng(0)
    start = kernels.backend_name()
    try:
        for _ in range(40):
            states, w, iters = random_propagate_instance(rng)
            kernels.use_backend("numpy")
            a = kernels.spatial_propagate(states, w, iters)
            kernels.use_backend("numba")
            b = kernels.spatial_propagate(states, w, iters)
            assert np.allclose(a, b, atol=1e-13)
    finally:
        kernels.use_backend(start)


def test_retrieve_parity_across_backends():
    rng = np.random.default_rng(1)
    start = kernels.backend_name()
    try:
        for _ in range(40):
            q, keys, values = random_retrieve_instance(rng)
            kernels.use_backend("numpy")
            a = kernels.attention_retrieve(q, keys, values)
            kernels.use_backend("numba")
            b = kernels.attention_retrieve(q, keys, values)
            assert np.allclose(a, b, atol=1e-13)
    finally:
        kernels.use_backend(start)


def test_kernels_accept_float32_input():
    rng = np.random.default_rng(2)
    states, w, iters = random_propagate_instance(rng)
    a = kernels.spatial_propagate(states.astype(np.float32), w.astype(np.float32), iters)
    b = kernels.spatial_propagate(states.astype(np.float32).astype(np.float64),
                                  w.astype(np.float32).astype(np.float64), iters)
    assert a.dtype == np.float64
    assert np.allclose(a, b)


def test_env_flag_selects_backend_in_fresh_process():
    code = "from maskfuse import kernels; print(kernels.backend_name())"
    for want in ("numpy", "numba"):
        env = dict(os.environ, MASKFUSE_BACKEND=want)
        out = subprocess.run([sys.executable, "-c", code], env=env,
                             capture_output=True, text=True, check=True)
        assert out.stdout.strip() == want


def test_unknown_backend_name_rejected():
    import pytest
    with pytest.raises(ValueError):
        kernels.use_backend("cuda")
