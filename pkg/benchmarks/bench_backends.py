"""Compare the numba and numpy backends on the linearization and a full solve.

Usage::

    python benchmarks/bench_backends.py --N 5 9 17 --K 30 120 --reps 3

For every (N, K) cell the script times one linearization per backend
(median of ``--reps``), then solves the same problem to convergence with
each backend and reports the largest difference between the two estimates.
"""

import argparse
import time

import numpy as np

from ctcr import _backend, bench
from ctcr.config import load_config
from ctcr.solver import gauss_newton, linearize

BACKENDS = ("numpy", "numba")


def time_linearize(problem, grid, reps):
    linearize(problem, grid)  # compile / warm up
    ts = []
    for _ in range(reps):
        t0 = time.perf_counter()
        linearize(problem, grid)
        ts.append(time.perf_counter() - t0)
    return float(np.median(ts))


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--N", type=int, nargs="+", default=[5, 9, 17])
    p.add_argument("--K", type=int, nargs="+", default=[30, 120])
    p.add_argument("--reps", type=int, default=3)
    p.add_argument("--config", default="experiment_params")
    p.add_argument("--no-solve", action="store_true", help="only time the linearization")
    args = p.parse_args(argv)

    cfg = load_config(args.config)
    print(f"{'N':>4} {'K':>5} {'numpy [s]':>10} {'numba [s]':>10} {'speedup':>8} {'solve diff':>11}")
    for N in args.N:
        for K in args.K:
            problem, grid = bench._problem(N, K, cfg)
            lin = {}
            est = {}
            for name in BACKENDS:
                with _backend.use_backend(name):
                    lin[name] = time_linearize(problem, grid, args.reps)
                    if not args.no_solve:
                        est[name], _ = gauss_newton(grid, problem)
            diff = float("nan")
            if est:
                diff = max(
                    np.abs(est["numpy"].T - est["numba"].T).max(),
                    np.abs(est["numpy"].eps - est["numba"].eps).max(),
                    np.abs(est["numpy"].varpi - est["numba"].varpi).max(),
                )
            print(
                f"{N:4d} {K:5d} {lin['numpy']:10.4f} {lin['numba']:10.4f} "
                f"{lin['numpy'] / lin['numba']:8.2f} {diff:11.2e}"
            )


if __name__ == "__main__":
    main()
