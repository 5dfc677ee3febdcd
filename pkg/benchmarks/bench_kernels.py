"""Compare the compiled kernels with the numpy fallback.

Run ``python benchmarks/bench_kernels.py [--reps N]``. Prints one row per
kernel with the best-of-``repeat`` wall time of each backend and the speedup.
"""
import argparse
import time

import numpy as np

from stratperm import kernels
from stratperm.core import StratifiedMatrix
from stratperm.rng import RandomSource
from stratperm.sampling import draw_swaps


def best_time(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--reps", type=int, default=20_000, help="permutations per call")
    p.add_argument("--repeat", type=int, default=3)
    args = p.parse_args(argv)
    if kernels.compiled is None:
        raise SystemExit("compiled extension not available; build with `pip install -e .`")

    rng = np.random.default_rng(0)
    A = StratifiedMatrix.from_blocks([rng.standard_normal((64, 64)) for _ in range(4)])
    data, offsets, starts, sizes = kernels.packed_blocks(A)
    swaps = draw_swaps(A.layout, args.reps, RandomSource(1))
    r, z = rng.standard_normal(A.n), (rng.random(A.n) < 0.5).astype(float)
    block = rng.standard_normal((8, 8))

    cases = {
        "fisher_yates": lambda impl: kernels.fisher_yates(starts, sizes, swaps, impl=impl),
        "permutation_statistic": lambda impl: kernels.permutation_statistic(
            data, offsets, starts, sizes, swaps, impl=impl),
        "product_statistic": lambda impl: kernels.product_statistic(r, z, starts, sizes, swaps, impl=impl),
        "perm_sums(8x8)": lambda impl: kernels.perm_sums(block, impl=impl),
    }
    print(f"{'kernel':<24}{'compiled s':>12}{'python s':>12}{'speedup':>10}")
    for name, fn in cases.items():
        a = fn(kernels.compiled)
        b = fn(kernels.pure)
        same = np.allclose(np.sort(np.ravel(a)), np.sort(np.ravel(b)), rtol=1e-12, atol=1e-12)
        tc = best_time(lambda: fn(kernels.compiled), args.repeat)
        tp = best_time(lambda: fn(kernels.pure), args.repeat)
        print(f"{name:<24}{tc:>12.4f}{tp:>12.4f}{tp / tc:>9.1f}x" + ("" if same else "  MISMATCH"))


if __name__ == "__main__":
    main()
