"""Time the distance-transform backends against each other.

Runs the feature transform and the full per-pair surface-distance path on
random masks of growing size, once per available backend, and prints a small
table. The two lanes compute identical arrays (the test suite asserts that);
this script only cares about speed.

Usage:
    python3 benchmarks/compare_backends.py [--sizes 32 64 128] [--repeats 3]
"""

import argparse
import time

import numpy as np

from rpcikit import backends
from rpcikit.metrics import surface_distances
from rpcikit.volume import Spacing


def best_of(fn, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def bench(size, repeats, rng):
    spacing = Spacing(0.8, 0.8, 2.5)
    mask = rng.random((size, size, size)) < 0.05
    mask[size // 2, size // 2, size // 2] = True
    other = rng.random((size, size, size)) < 0.05
    other[size // 3, size // 3, size // 3] = True

    rows = []
    for backend in backends.available_backends():
        backends.warmup(backend)
        ft = best_of(lambda: backends.feature_transform(mask, spacing, backend=backend), repeats)
        sd = best_of(lambda: surface_distances(mask, other, spacing, backend=backend), repeats)
        rows.append((backend, ft, sd))
    return rows


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[32, 64, 128])
    ap.add_argument("--repeats", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rng = np.random.Generator(np.random.PCG64(args.seed))
    print(f"available backends: {', '.join(backends.available_backends())}")
    print(f"{'size':>6} {'backend':>8} {'feature (s)':>12} {'surface pair (s)':>17}")
    for size in args.sizes:
        for backend, ft, sd in bench(size, args.repeats, rng):
            print(f"{size:>4}^3 {backend:>8} {ft:>12.4f} {sd:>17.4f}")


if __name__ == "__main__":
    main()
