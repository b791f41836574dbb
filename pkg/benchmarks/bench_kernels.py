#!/usr/bin/env python3
"""Benchmark the numba kernels against the pure-numpy fallback.

Runs each hot kernel on a realistic workload with both backends and prints a
timing table.  Numba JIT compilation happens during warmup (cached across
runs), so the numbers reflect steady-state throughput.

    python3 benchmarks/bench_kernels.py [--repeats N]
"""

import argparse
import time

import numpy as np
from scipy import ndimage

from lesionforge.kernels import numpy_impl

try:
    from lesionforge.kernels import numba_impl
except ImportError:
    numba_impl = None


def best_of(fn, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def make_workloads(seed=0):
    r = np.random.default_rng(seed)
    img = r.random((256, 256, 3))
    flow = r.uniform(-5, 5, size=(256, 256, 2))
    labels = r.integers(0, 3, size=(256, 256)).astype(np.uint8)
    valid = r.random((256, 256)) > 0.05

    xs = r.uniform(0, 255, size=100_000)
    ys = r.uniform(0, 255, size=100_000)

    n = 5000
    values = r.standard_normal(n)
    neighbors = r.integers(-1, n, size=(n, 4)).astype(np.int64)

    lum = r.random((256, 256))
    gmag = r.random((256, 256))
    dys = r.integers(-16, 17, size=1500).astype(np.int64)
    dxs = r.integers(-16, 17, size=1500).astype(np.int64)
    cys = r.integers(20, 236, size=900).astype(np.int64)
    cxs = r.integers(20, 236, size=900).astype(np.int64)

    base = ndimage.gaussian_filter(r.standard_normal((256, 256)), 1.5)
    lum_a = 0.5 + 0.3 * base / np.abs(base).max()
    lum_b = np.roll(lum_a, shift=(-2, 3), axis=(0, 1))
    pts = np.stack([r.integers(20, 236, size=50),
                    r.integers(20, 236, size=50)], axis=1).astype(np.int64)

    def repeat(fn, times):
        def call():
            for _ in range(times):
                fn()
        return call

    return [
        ("laplacian_apply x400 (n=5000)",
         lambda impl: repeat(lambda: impl.laplacian_apply(values, neighbors), 400)),
        ("warp_backward 256x256x3",
         lambda impl: repeat(lambda: impl.warp_backward(img, flow), 5)),
        ("bilinear_gather 100k pts",
         lambda impl: repeat(lambda: impl.bilinear_gather(img, xs, ys), 5)),
        ("nearest_warp_labels 256x256",
         lambda impl: repeat(lambda: impl.nearest_warp_labels(labels, flow, valid), 10)),
        ("footprint_stats 900x1500",
         lambda impl: repeat(lambda: impl.footprint_stats(lum, gmag, dys, dxs, cys, cxs), 5)),
        ("ncc_search 50 pts w=11 s=8",
         lambda impl: repeat(lambda: impl.ncc_search(lum_a, lum_b, pts, 5, 8), 1)),
    ]


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=3,
                        help="timing repeats per kernel (best is reported)")
    args = parser.parse_args()

    workloads = make_workloads()
    if numba_impl is not None:
        for _, bind in workloads:       # warmup compiles everything once
            bind(numba_impl)()

    name_w = max(len(name) for name, _ in workloads)
    header = f"{'kernel':<{name_w}}  {'numpy':>10}  {'numba':>10}  {'speedup':>8}"
    print(header)
    print("-" * len(header))
    for name, bind in workloads:
        t_np = best_of(bind(numpy_impl), args.repeats)
        if numba_impl is None:
            print(f"{name:<{name_w}}  {t_np * 1e3:>8.2f}ms  {'n/a':>10}  {'':>8}")
            continue
        t_nb = best_of(bind(numba_impl), args.repeats)
        print(f"{name:<{name_w}}  {t_np * 1e3:>8.2f}ms  {t_nb * 1e3:>8.2f}ms  "
              f"{t_np / t_nb:>7.1f}x")
    if numba_impl is None:
        print("\nnumba unavailable: only the numpy fallback was timed")


if __name__ == "__main__":
    main()
