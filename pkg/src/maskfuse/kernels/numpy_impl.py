"""Pure-numpy implementations of the hot kernels.

These are the fallback path (and the cross-check used in tests); they trade
peak speed for zero compilation cost. Shapes and semantics match
``numba_impl`` exactly.
"""
from __future__ import annotations

import numpy as np


def spatial_propagate(states: np.ndarray, weights: np.ndarray, iters: int) -> np.ndarray:
    """Run the normalized graph update on flattened node states.

    Args:
        states: (N, P) float64, one row per graph node.
        weights: (N, N) float64 symmetric-ish weight matrix, zero diagonal.
        iters: number of synchronous update rounds; weights stay frozen.

    Returns:
        (N, P) float64 updated states.

    Each round applies h_v <- (h_v + sum_u W[v, u] * h_u) / (1 + sum_u W[v, u])
    to every node simultaneously.
    """
    denom = 1.0 + weights.sum(axis=1)
    out = states
    for _ in range(int(iters)):
        out = (out + weights @ out) / denom[:, None]
    return np.ascontiguousarray(out)


def attention_retrieve(query: np.ndarray, keys: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Sum of per-entry softmax reads from a key/value memory.

    Args:
        query: (P, C) float64 query key vectors, one per pixel.
        keys: (R, P, C) float64 memory keys, one (P, C) block per stored frame.
        values: (R, P) float64 memory values.

    Returns:
        (P,) float64 where out[i] = sum_r softmax_j(query[i] . keys[r, j]) . values[r].

    The softmax normalizes over the memory pixels of each stored frame
    independently, so each frame contributes a value in [min, max] of its
    stored values and the output scales with the number of frames.
    """
    p = query.shape[0]
    out = np.zeros(p, dtype=np.float64)
    for r in range(keys.shape[0]):
        logits = query @ keys[r].T
        logits -= logits.max(axis=1, keepdims=True)
        w = np.exp(logits)
        w /= w.sum(axis=1, keepdims=True)
        out += w @ values[r]
    return out
