"""Benchmark the two kernel backends against each other.

Times the graph-propagation and memory-retrieval kernels on shapes the
pipeline actually produces (full-frame soft states, 32x32 memory crops)
and prints per-call times plus the numpy/numba speedup. Also reports the
worst disagreement between backends as a sanity check.

Usage: python benchmarks/bench_kernels.py [--repeat 7] [--inner 3]
"""
import argparse
import time

import numpy as np

from maskfuse import kernels

SPATIAL_SHAPES = [
    # nodes, pixels (H*W)
    (4, 160 * 224),
    (8, 160 * 224),
    (12, 480 * 854),
]
RETRIEVE_SHAPES = [
    # memory frames, crop pixels, key channels
    (1, 32 * 32, 6),
    (5, 32 * 32, 6),
    (10, 48 * 48, 6),
]


def best_of(fn, repeat, inner):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        for _ in range(inner):
            fn()
        best = min(best, (time.perf_counter() - t0) / inner)
    return best


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=7, help="timing repetitions, best wins")
    ap.add_argument("--inner", type=int, default=3, help="calls per repetition")
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    rows = []
    worst_gap = 0.0

    for n, p in SPATIAL_SHAPES:
        states = rng.random((n, p))
        w = np.clip(rng.random((n, n)), 0, 1)
        np.fill_diagonal(w, 0.0)
        times = {}
        outs = {}
        for backend in ("numpy", "numba"):
            try:
                kernels.use_backend(backend)
            except ImportError:
                times[backend] = None
                continue
            kernels.spatial_propagate(states, w, 2)  # warm
            times[backend] = best_of(
                lambda: kernels.spatial_propagate(states, w, 2),
                args.repeat, args.inner)
            outs[backend] = kernels.spatial_propagate(states, w, 2)
        if len(outs) == 2:
            worst_gap = max(worst_gap, float(np.max(np.abs(outs["numpy"] - outs["numba"]))))
        rows.append((f"propagate n={n} p={p}", times))

    for t, p, c in RETRIEVE_SHAPES:
        q = rng.normal(size=(p, c))
        keys = rng.normal(size=(t, p, c))
        values = rng.random((t, p))
        times = {}
        outs = {}
        for backend in ("numpy", "numba"):
            try:
                kernels.use_backend(backend)
            except ImportError:
                times[backend] = None
                continue
            kernels.attention_retrieve(q, keys, values)  # warm
            times[backend] = best_of(
                lambda: kernels.attention_retrieve(q, keys, values),
                args.repeat, args.inner)
            outs[backend] = kernels.attention_retrieve(q, keys, values)
        if len(outs) == 2:
            worst_gap = max(worst_gap, float(np.max(np.abs(outs["numpy"] - outs["numba"]))))
        rows.append((f"retrieve t={t} p={p} c={c}", times))

    print(f"{'kernel':<28} {'numpy':>10} {'numba':>10} {'speedup':>8}")
    for name, times in rows:
        tn = times.get("numpy")
        tb = times.get("numba")
        if tb is None:
            print(f"{name:<28} {tn * 1e3:>8.2f}ms {'absent':>10} {'-':>8}")
        else:
            print(f"{name:<28} {tn * 1e3:>8.2f}ms {tb * 1e3:>8.2f}ms {tn / tb:>7.1f}x")
    print(f"\nmax |numpy - numba| over benched calls: {worst_gap:.2e}")


if __name__ == "__main__":
    main()
