"""Exit probability before the control horizon: direct Monte Carlo against paths driven by
the barrier certificate's tilt and reweighted.

Usage::

    python3 scripts/importance_sampling.py --eps 0.3 0.2 0.15 --n 2000
"""

import argparse

from levyexit import ExitExperiment, ExponentialLight, QPOptions, SystemSpec, barrier_height, importance_sampled_exit


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--eps", type=float, nargs="+", default=[0.3, 0.2, 0.15])
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--seed", type=int, default=2026)
    args = p.parse_args(argv)
    system, nu = SystemSpec.benchmark(), ExponentialLight()
    barrier = barrier_height(system, nu, QPOptions())
    T = float(barrier.control.horizon)
    print(f"v_bar = {barrier.value:.6f}, horizon = {T:.4f}")
    print("eps, direct, direct_se, weighted, weighted_se, ess, flags")
    exp = ExitExperiment(system, nu, (0.0,), tuple(sorted(args.eps, reverse=True)), args.n, seed=args.seed)
    for k, eps in enumerate(exp.eps_schedule):
        d = importance_sampled_exit(exp, None, k, T)
        w = importance_sampled_exit(exp, barrier.control, k, T)
        print(f"{eps}, {d.estimate:.4g}, {d.std_error:.2g}, {w.estimate:.4g}, {w.std_error:.2g}, {w.ess:.1f}, "
              f"{','.join(w.flags) or 'none'}")


if __name__ == "__main__":
    main()
