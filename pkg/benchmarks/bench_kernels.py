"""Time the numba kernels against their numpy fallbacks.

    python benchmarks/bench_kernels.py [--size 200000] [--repeat 5]

Both backends are imported directly, so the BRFMOB_DISABLE_NUMBA flag does
not matter here. The first numba call (compilation or cache load) is timed
separately and excluded from the per-call figures.
"""
import argparse
import time
import timeit

import numpy as np

from brfmob import kernels
from brfmob.kernels import numpy_backend


def cases(size, rng):
    z = rng.normal(2.0, 3.0, size)
    kde_data = rng.normal(size=max(size // 20, 100))
    grid = np.linspace(-5, 5, 2048)
    n_nodes = max(size // 50, 10)
    src, dst = rng.integers(0, n_nodes, size), rng.integers(0, n_nodes, size)
    w = rng.integers(1, 1000, size)
    return {
        "solve_logit": lambda be: be.solve_logit(z, 3.0, 0.7, 0.4),
        "kde_grid": lambda be: be.kde_grid(kde_data, grid, 0.2),
        "accumulate_centralities": lambda be: be.accumulate_centralities(src, dst, w, n_nodes),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--size", type=int, default=200_000, help="points per kernel call")
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    if kernels.numba_backend is None:
        print("numba backend unavailable (not installed or disabled); timing numpy only")
    backends = [("numpy", numpy_backend)]
    if kernels.numba_backend is not None:
        backends.append(("numba", kernels.numba_backend))

    rng = np.random.default_rng(0)
    print(f"{'kernel':<26}{'backend':<9}{'first call s':>14}{'best of ' + str(args.repeat) + ' s':>16}{'speedup':>10}")
    for name, fn in cases(args.size, rng).items():
        base = None
        for label, be in backends:
            t0 = time.perf_counter()
            fn(be)
            first = time.perf_counter() - t0
            best = min(timeit.repeat(lambda: fn(be), number=1, repeat=args.repeat))
            base = base or best
            print(f"{name:<26}{label:<9}{first:>14.4f}{best:>16.4f}{base / best:>9.1f}x")


if __name__ == "__main__":
    main()
