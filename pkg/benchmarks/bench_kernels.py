#!/usr/bin/env python3
"""Throughput of the compiled kernels vs the pure-NumPy fallback.

    python benchmarks/bench_kernels.py [--repeats N]

Sizes mirror how the pipeline actually calls the kernels: convolution over
field sequences during training batches, sparsemax over attention scores,
k-NN scans inside SMOTE/ENN.  Both backends share one workload per row, so
the ratio column is apples to apples.
"""

import argparse
import time

import numpy as np

from severitas._kernels import reference

try:
    from severitas._kernels import _speedups as compiled
except ImportError:
    compiled = None


def best_of(fn, repeats):
    times = []
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return min(times)


def workloads(rng):
    # conv1d: training-batch shape (batch 32, 16 channels over 9 fields)
    x = rng.normal(size=(32, 16, 9))
    w = rng.normal(size=(32, 16, 3))
    g = rng.normal(size=(32, 32, 9))
    yield ("conv1d forward  32x16x9 k3", lambda m: m.conv1d_forward(x, w, 1))
    yield ("conv1d backward 32x16x9 k3", lambda m: m.conv1d_backward(x, w, 1, g))

    xl = rng.normal(size=(256, 32, 64))
    wl = rng.normal(size=(64, 32, 5))
    yield ("conv1d forward  256x32x64 k5", lambda m: m.conv1d_forward(xl, wl, 2))

    # sparsemax: attention scores (batch*heads*slots rows over 9 fields)
    z = rng.normal(size=(32 * 4 * 8, 9)) * 2.0
    yield ("sparsemax 1024 rows x 9", lambda m: m.sparsemax_rows(z))
    z16 = rng.normal(size=(10_000, 16)) * 2.0
    yield ("sparsemax 10k rows x 16", lambda m: m.sparsemax_rows(z16))

    # knn: ENN-style self-queries over an encoded training split
    pts = rng.normal(size=(1000, 22))
    excl = np.arange(1000, dtype=np.int64)
    yield ("knn n=1000 d=22 k=3 (self)", lambda m: m.knn_search(pts, pts, 3, excl))
    small = rng.normal(size=(360, 22))
    yield ("knn n=360 d=22 k=5 (self)",
           lambda m: m.knn_search(small, small, 5, np.arange(360, dtype=np.int64)))


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    if compiled is None:
        print("compiled backend not built; showing the NumPy fallback only")
    rng = np.random.default_rng(0)
    header = f"{'kernel':32s} {'numpy':>10s} {'compiled':>10s} {'ratio':>7s}"
    print(header)
    print("-" * len(header))
    for name, call in workloads(rng):
        t_ref = best_of(lambda: call(reference), args.repeats)
        if compiled is None:
            print(f"{name:32s} {t_ref * 1e3:9.3f}ms {'-':>10s} {'-':>7s}")
            continue
        t_cmp = best_of(lambda: call(compiled), args.repeats)
        ratio = t_ref / t_cmp if t_cmp > 0 else float("inf")
        print(f"{name:32s} {t_ref * 1e3:9.3f}ms {t_cmp * 1e3:9.3f}ms {ratio:6.2f}x")


if __name__ == "__main__":
    main()
