"""Regenerate the reference values frozen in tests/oracles.py.

Usage::

    python3 scripts/oracles.py            # Hamiltonian quasi-potential table (seconds)
    python3 scripts/oracles.py --grid     # also the exhaustive polyline grid searches (minutes)
"""

import argparse
import itertools
import os
import sys
import time

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(os.path.abspath(__file__)), "..", "tests"))

from oracles import benchmark_quasipotential, hamiltonian_momentum  # noqa: E402

from levyexit import ExponentialLight, Polyline, SystemSpec, entropy, tilt_for_path  # noqa: E402
from levyexit.errors import LevyExitError  # noqa: E402


def hamiltonian_table(points=(0.4, 0.5, 0.6, 0.7, 1.0, 1.5)):
    print("z, p(z), V(0,z)")
    for z in points:
        print(f"{z}, {hamiltonian_momentum(z):.12g}, {benchmark_quasipotential(z):.12g}")


def _cost(times, states, system, nu, h_max):
    path = Polyline(np.asarray(times, dtype=float), np.asarray(states, dtype=float).reshape(-1, 1))
    try:
        return entropy(tilt_for_path(path, system, nu, h_max=h_max), nu)
    except LevyExitError:
        return np.inf


def one_knot(system, nu):
    best, arg = np.inf, None
    for t1 in np.linspace(0.05, 1.95, 39):
        for x1 in np.linspace(-0.2, 1.0, 49):
            v = _cost([0.0, t1, 2.0], [0.0, x1, 1.0], system, nu, 0.01)
            if v < best:
                best, arg = v, (t1, x1)
    return best, arg


def two_knot(system, nu):
    best, arg = np.inf, None
    ts, xs = np.linspace(0.1, 1.9, 13), np.linspace(-0.1, 0.9, 15)
    for t1, t2 in itertools.combinations(ts, 2):
        for x1 in xs:
            for x2 in xs:
                v = _cost([0.0, t1, t2, 2.0], [0.0, x1, x2, 1.0], system, nu, 0.05)
                if v < best:
                    best, arg = v, (t1, t2, x1, x2)
    return best, arg


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--grid", action="store_true", help="run the polyline grid searches")
    args = p.parse_args(argv)
    hamiltonian_table()
    if args.grid:
        system, nu = SystemSpec.benchmark(), ExponentialLight()
        for name, fn in (("one knot", one_knot), ("two knots", two_knot)):
            t0 = time.perf_counter()
            value, arg = fn(system, nu)
            print(f"{name}: value = {value!r}, argmin = {arg}, {time.perf_counter() - t0:.0f} s")


if __name__ == "__main__":
    main()
