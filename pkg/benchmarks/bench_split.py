"""Benchmark the split-search kernels: compiled extension vs numpy.

The split search dominates forest training time, which is why it has a
compiled core at all. Run from the repo root:

    python3 benchmarks/bench_split.py
"""

import argparse
import time

import numpy as np

from erd._kernels import BACKEND
from erd._kernels._split_py import best_split as best_split_py

try:
    from erd._kernels._split import best_split as best_split_cy
except ImportError:
    best_split_cy = None


def make_case(rng, n_rows, n_cols):
    X = (rng.random((n_rows, n_cols)) < 0.3).astype(np.uint8)
    y = (rng.random(n_rows) < 0.5).astype(np.uint8)
    idx = np.sort(rng.integers(0, n_rows, n_rows)).astype(np.int64)
    cols = np.arange(n_cols, dtype=np.int64)
    return X, y, idx, cols


def bench(fn, cases, repeats):
    # warm up, then take the best of `repeats` full sweeps
    for case in cases[:2]:
        fn(*case, 1)
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        for case in cases:
            fn(*case, 1)
        best = min(best, time.perf_counter() - start)
    return best


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--cases", type=int, default=200)
    args = parser.parse_args()

    rng = np.random.default_rng(42)
    print(f"active backend: {BACKEND}")
    print(f"{'rows':>6} {'cols':>5} {'python (ms)':>12} {'cython (ms)':>12} {'speedup':>8}")
    for n_rows, n_cols in [(64, 40), (256, 120), (1024, 300), (4096, 600)]:
        cases = [make_case(rng, n_rows, n_cols) for _ in range(max(1, args.cases // 10))]
        t_py = bench(best_split_py, cases, args.repeats) * 1000
        if best_split_cy is None:
            print(f"{n_rows:>6} {n_cols:>5} {t_py:>12.2f} {'not built':>12} {'-':>8}")
            continue
        t_cy = bench(best_split_cy, cases, args.repeats) * 1000
        for case in cases:
            pick_py, gain_py = best_split_py(*case, 1)
            pick_cy, gain_cy = best_split_cy(*case, 1)
            assert pick_py == pick_cy and gain_py == gain_cy, "kernels disagree"
        print(f"{n_rows:>6} {n_cols:>5} {t_py:>12.2f} {t_cy:>12.2f} {t_py / t_cy:>7.1f}x")


if __name__ == "__main__":
    main()
