"""Benchmark the compiled greedy-assignment kernel against the numpy
fallback on representative sub-clustering workloads.

Usage: python benchmarks/bench_kernels.py
"""

from __future__ import annotations

import time

import numpy as np

from subtail import kernels
from subtail._greedy_fallback import greedy_capacity_assign as fallback
from subtail.core import unit_normalize_rows

try:
    from subtail._greedy import greedy_capacity_assign as compiled
except ImportError:
    compiled = None


def humanize(seconds: float) -> str:
    if seconds < 1e-3:
        return f"{seconds * 1e6:.0f} us"
    if seconds < 1.0:
        return f"{seconds * 1e3:.1f} ms"
    return f"{seconds:.2f} s"


def time_fn(fn, sim, capacity, repeats=3) -> float:
    best = np.inf
    for _ in range(repeats):
        start = time.perf_counter()
        fn(sim, capacity)
        best = min(best, time.perf_counter() - start)
    return best


def main() -> None:
    rng = np.random.default_rng(0)
    # (samples, centers, capacity): tail-class, mid-class, head-class shapes
    workloads = [
        (30, 2, 15),
        (300, 20, 15),
        (2000, 134, 15),
        (5000, 100, 50),
    ]
    print(f"active backend: {kernels.KERNEL_BACKEND}")
    print(f"{'samples':>8} {'centers':>8} {'capacity':>9} {'fallback':>10} {'compiled':>10} {'speedup':>8}")
    for n, m, capacity in workloads:
        feats = unit_normalize_rows(rng.standard_normal((n, 32)))
        centers = unit_normalize_rows(rng.standard_normal((m, 32)))
        sim = np.ascontiguousarray(feats @ centers.T)
        t_fb = time_fn(fallback, sim, capacity)
        if compiled is None:
            print(f"{n:>8} {m:>8} {capacity:>9} {humanize(t_fb):>10} {'n/a':>10} {'n/a':>8}")
            continue
        t_c = time_fn(compiled, sim, capacity)
        assert np.array_equal(fallback(sim, capacity), np.asarray(compiled(sim, capacity)))
        print(
            f"{n:>8} {m:>8} {capacity:>9} {humanize(t_fb):>10} {humanize(t_c):>10} "
            f"{t_fb / t_c:>7.1f}x"
        )


if __name__ == "__main__":
    main()
