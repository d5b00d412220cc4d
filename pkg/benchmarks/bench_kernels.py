#!/usr/bin/env python3
"""Benchmark the numba kernels against the pure-numpy fallbacks.

Usage:
    python3 benchmarks/bench_kernels.py [--frames 4000] [--trailer 400] [--repeat 3]

The same comparison can be forced package-wide at runtime by setting
TRAILERNESS_NO_NUMBA=1.
"""

import argparse
import time

import numpy as np

from trailerness import kernels


def best_of(fn, repeat, *args):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t0)
    return min(times)


def run(frames, trailer_size, repeat):
    rng = np.random.default_rng(0)
    stack = rng.integers(0, 256, size=(frames, 64, 64), dtype=np.uint8)
    episode = rng.integers(0, 1 << 64, size=frames, dtype=np.uint64)
    trailer = rng.integers(0, 1 << 64, size=trailer_size, dtype=np.uint64)
    trailer[: trailer_size // 10] = episode[: trailer_size // 10]  # some near hits

    cases = [
        (f"dhash_batch ({frames} frames 64x64)",
         kernels.dhash_batch_numpy, kernels.dhash_batch_numba, (stack,)),
        (f"min_distance_table ({frames}x{trailer_size})",
         kernels.min_distance_table_numpy, kernels.min_distance_table_numba,
         (episode, trailer)),
        (f"mih tau=10 ({frames}x{trailer_size})",
         kernels.mih_min_distance_table_numpy, kernels.mih_min_distance_table_numba,
         (episode, trailer, 10)),
    ]

    print(f"numba available: {kernels.HAS_NUMBA}")
    header = f"{'kernel':40s} {'numpy':>10s} {'numba':>10s} {'speedup':>8s}"
    print(header)
    print("-" * len(header))
    for name, np_fn, nb_fn, args in cases:
        t_np = best_of(np_fn, repeat, *args)
        if kernels.HAS_NUMBA:
            nb_fn(*args)  # JIT warmup outside the timed region
            t_nb = best_of(nb_fn, repeat, *args)
            assert np.array_equal(np_fn(*args), nb_fn(*args)), name
            print(f"{name:40s} {t_np:9.4f}s {t_nb:9.4f}s {t_np / t_nb:7.1f}x")
        else:
            print(f"{name:40s} {t_np:9.4f}s {'n/a':>10s} {'n/a':>8s}")


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--frames", type=int, default=4000)
    parser.add_argument("--trailer", type=int, default=400)
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args()
    run(args.frames, args.trailer, args.repeat)


if __name__ == "__main__":
    main()
