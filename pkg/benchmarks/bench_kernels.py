"""Time the numba kernels against their numpy fallbacks.

Run with ``python3 benchmarks/bench_kernels.py``. The first numba call per
kernel is made before timing so JIT compilation is excluded.
"""
import argparse
import timeit

import numpy as np

from dsgsum import kernels


def cases(rng):
    a = rng.integers(0, 50, 120)
    b = rng.integers(0, 50, 400)
    prefix = rng.integers(0, 30, 100)
    diff = rng.normal(size=11490)
    idx = rng.integers(0, diff.size, size=(100, 3000))
    return {
        "lcs_length (120 x 400)": (kernels.lcs_length_numpy, kernels.lcs_length_numba, (a, b)),
        "trigram_block_mask (len 100)": (kernels.trigram_block_mask_numpy,
                                         kernels.trigram_block_mask_numba, (prefix, 30000)),
        "bootstrap_mean_diffs (100 x 3000)": (kernels.bootstrap_mean_diffs_numpy,
                                              kernels.bootstrap_mean_diffs_numba, (diff, idx)),
    }


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--number", type=int, default=20)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    print(f"{'kernel':36s} {'numpy ms':>10s} {'numba ms':>10s} {'speedup':>8s}")
    for name, (np_fn, nb_fn, xs) in cases(rng).items():
        nb_fn(*xs)
        t_np = min(timeit.repeat(lambda: np_fn(*xs), repeat=args.repeat, number=args.number))
        t_nb = min(timeit.repeat(lambda: nb_fn(*xs), repeat=args.repeat, number=args.number))
        t_np, t_nb = 1e3 * t_np / args.number, 1e3 * t_nb / args.number
        print(f"{name:36s} {t_np:10.3f} {t_nb:10.3f} {t_np / t_nb:7.1f}x")


if __name__ == "__main__":
    main()
