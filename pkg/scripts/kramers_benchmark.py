"""Barrier height and exit Monte Carlo on the benchmark or the broken-symmetry interval.

Usage::

    python3 scripts/kramers_benchmark.py --n 2000 --workers 8
    python3 scripts/kramers_benchmark.py --lo -1.5 --n 2000
"""

import argparse
import time

from levyexit import ExitExperiment, ExponentialLight, QPOptions, SystemSpec, barrier_height, run_exit_mc
from levyexit.exitlab import exit_location_stats


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--lo", type=float, default=-1.0)
    p.add_argument("--hi", type=float, default=1.0)
    p.add_argument("--eps", type=float, nargs="+", default=[0.4, 0.3, 0.2, 0.15])
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--seed", type=int, default=2024)
    p.add_argument("--workers", type=int, default=1)
    args = p.parse_args(argv)

    system, nu = SystemSpec.benchmark(args.lo, args.hi), ExponentialLight()
    t0 = time.perf_counter()
    barrier = barrier_height(system, nu, QPOptions(workers=args.workers))
    print(f"v_bar = {barrier.value:.6f}  z* = {barrier.z}  argmin set = {[float(z[0]) for z in barrier.argmin_set]}"
          f"  ({time.perf_counter() - t0:.0f} s)")
    exp = ExitExperiment(system, nu, (0.0,), tuple(args.eps), args.n, seed=args.seed, workers=args.workers,
                         barrier=barrier)
    t0 = time.perf_counter()
    rep = run_exit_mc(exp)
    print(rep.table(), end="")
    print(f"spearman = {rep.spearman}  slope = {rep.trend_slope}  intercept = {rep.trend_intercept}"
          f"  flags = {rep.flags or 'none'}  ({time.perf_counter() - t0:.0f} s)")
    loc = exit_location_stats(exp, exp.location_delta, rep.samples)
    print(f"location mode = {loc.mode}  prob = {loc.prob}  nondecreasing = {loc.nondecreasing}")


if __name__ == "__main__":
    main()
