"""Numba-compiled implementations of the hot kernels.

The retrieval kernel is the dominant cost of a run: it is O(R * P^2 * C)
per object per frame, with P = key height * key width. Fusing the dot
products, the stabilized exp and the weighted sum into one pass avoids the
(P, P) temporaries the numpy path has to materialize. Both kernels use
plain sequential accumulation so results are reproducible run to run and
independent of thread counts in the caller.
"""
from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def spatial_propagate(states: np.ndarray, weights: np.ndarray, iters: int) -> np.ndarray:
    """Synchronous normalized graph update on (N, P) states; see numpy_impl."""
    n, p = states.shape
    denom = np.empty(n, dtype=np.float64)
    for v in range(n):
        s = 0.0
        for u in range(n):
            s += weights[v, u]
        denom[v] = 1.0 + s
    cur = states.copy()
    nxt = np.empty_like(cur)
    for _ in range(iters):
        for v in range(n):
            for i in range(p):
                nxt[v, i] = cur[v, i]
            for u in range(n):
                w = weights[v, u]
                if w != 0.0:
                    for i in range(p):
                        nxt[v, i] += w * cur[u, i]
            inv = 1.0 / denom[v]
            for i in range(p):
                nxt[v, i] *= inv
        tmp = cur
        cur = nxt
        nxt = tmp
    return cur


@njit(cache=True)
def attention_retrieve(query: np.ndarray, keys: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Summed per-frame softmax memory reads; see numpy_impl for the contract."""
    p, c = query.shape
    r_n = keys.shape[0]
    out = np.zeros(p, dtype=np.float64)
    logits = np.empty(p, dtype=np.float64)
    for i in range(p):
        total = 0.0
        for r in range(r_n):
            m = -1.0e300
            for j in range(p):
                d = 0.0
                for k in range(c):
                    d += query[i, k] * keys[r, j, k]
                logits[j] = d
                if d > m:
                    m = d
            s = 0.0
            acc = 0.0
            for j in range(p):
                e = np.exp(logits[j] - m)
                s += e
                acc += e * values[r, j]
            total += acc / s
        out[i] = total
    return out


def warmup() -> None:
    """Trigger compilation on tiny inputs so first real use is not billed for it."""
    st = np.zeros((2, 4), dtype=np.float64)
    w = np.zeros((2, 2), dtype=np.float64)
    spatial_propagate(st, w, 1)
    q = np.zeros((4, 3), dtype=np.float64)
    k = np.zeros((1, 4, 3), dtype=np.float64)
    v = np.zeros((1, 4), dtype=np.float64)
    attention_retrieve(q, k, v)
