"""Cycle ladder between two balls around the stable point: success probability per attempt,
Wald identity and geometric goodness of fit.

Usage::

    python3 scripts/cycle_diagnostic.py --rho 0.1 --rho-prime 0.5 --n 500
"""

import argparse

from levyexit import ExitExperiment, ExponentialLight, SystemSpec, cycle_diagnostic


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--rho", type=float, default=0.1)
    p.add_argument("--rho-prime", type=float, default=0.5)
    p.add_argument("--eps", type=float, nargs="+", default=[0.5, 0.4, 0.3, 0.2])
    p.add_argument("--n", type=int, default=500)
    p.add_argument("--seed", type=int, default=3)
    p.add_argument("--workers", type=int, default=1)
    args = p.parse_args(argv)
    exp = ExitExperiment(SystemSpec.benchmark(), ExponentialLight(), (0.0,), tuple(args.eps), args.n,
                         seed=args.seed, workers=args.workers)
    print("eps, q_hat, mean_attempts, mean_cycle, mean_exit_time, wald_ratio, chi2_pvalue")
    for c in cycle_diagnostic(exp, args.rho, args.rho_prime):
        print(f"{c.eps}, {c.q_hat:.4f}, {c.mean_attempts:.3f}, {c.mean_cycle:.3f}, {c.mean_exit_time:.3f}, "
              f"{c.wald_ratio:.3f}, {c.chi2_pvalue:.3f}")


if __name__ == "__main__":
    main()
