"""Benchmark the numba kernels against the pure-numpy fallback.

Run:  python benchmarks/bench_kernels.py  [--rows N] [--cols D] [--reps R]

The same comparison is what TABEMBED_NO_NUMBA=1 switches at import time;
this script loads both paths explicitly so one process can time them
side by side (numba JIT compilation happens during warmup and is not
counted).
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from tabembed.learners import kernels


def time_fn(fn, reps):
    best = float("inf")
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main() -> None:
    parser = argparse.ArgumentParser()
    parser.add_argument("--rows", type=int, default=528)
    parser.add_argument("--cols", type=int, default=27)
    parser.add_argument("--reps", type=int, default=20)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    rng = np.random.default_rng(args.seed)
    X = np.ascontiguousarray(rng.normal(size=(args.rows, args.cols)))
    y = (rng.random(args.rows) < 0.4).astype(np.float64)
    p = np.full(args.rows, y.mean())
    g = p - y
    h = p * (1.0 - p)

    paths = {}
    for use_numba in (True, False):
        try:
            paths["numba" if use_numba else "numpy"] = kernels.get_kernels(use_numba)
        except ImportError:
            print("numba not importable; benchmarking numpy path only")

    cases = {
        "logistic tree depth=5": lambda k: k.build_tree_logistic(X, g, h, 5, 1.0, 1.0),
        "logistic tree depth=20": lambda k: k.build_tree_logistic(X, g, h, 20, 1.0, 1.0),
        "gini tree depth=10": lambda k: k.build_tree_gini(X, y, 10, 1.0, 42),
        "gini tree depth=10 feat=0.3": lambda k: k.build_tree_gini(X, y, 10, 0.3, 42),
    }

    # warmup (includes JIT compilation for the numba path)
    for k in paths.values():
        for case in cases.values():
            case(k)

    tree = paths[next(iter(paths))].build_tree_logistic(X, g, h, 20, 1.0, 1.0)[:5]
    cases["predict depth=20"] = lambda k: k.predict_tree(X, *tree)
    for k in paths.values():
        cases["predict depth=20"](k)

    print(f"rows={args.rows} cols={args.cols} reps={args.reps} (best of)")
    header = f"{'case':<32}" + "".join(f"{name:>12}" for name in paths)
    if len(paths) == 2:
        header += f"{'speedup':>10}"
    print(header)
    for name, case in cases.items():
        times = {pname: time_fn(lambda k=k: case(k), args.reps) for pname, k in paths.items()}
        row = f"{name:<32}" + "".join(f"{t * 1e3:>10.3f}ms" for t in times.values())
        if len(times) == 2:
            row += f"{times['numpy'] / times['numba']:>9.1f}x"
        print(row)

    # cross-path agreement on this draw
    if len(paths) == 2:
        tn = paths["numba"].build_tree_logistic(X, g, h, 20, 1.0, 1.0)
        tp = paths["numpy"].build_tree_logistic(X, g, h, 20, 1.0, 1.0)
        same = all(np.array_equal(a, b) for a, b in zip(tn[:4], tp[:4]))
        close = np.allclose(tn[4], tp[4], atol=1e-12)
        print(f"structure identical: {same}; leaf values within 1e-12: {close}")


if __name__ == "__main__":
    main()
