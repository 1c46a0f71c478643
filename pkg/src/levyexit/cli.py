"""Command-line front end.

Subcommands: simulate, sample-measure, quasipotential, exit-stats, kramers, cycle-diag,
is-exit.  Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 flagged-invalid result under ``--strict``.

All randomness derives from the master seed; path ``i`` at schedule index ``k`` uses
``SeedSequence(seed, spawn_key=(k, i))``.  The worker count never enters a report.
"""

from __future__ import annotations

import argparse
import hashlib
import os
import sys

import numpy as np

from . import report as rpt
from .config import ExperimentConfig, t_cap_value
from .controls import entropy
from .dynamics import simulate_sde
from .errors import ConfigurationError, LevyExitError
from .exitlab import (
    ExitExperiment,
    cycle_diagnostic,
    exit_location_stats,
    importance_sampled_exit,
    nondecreasing_within_ci,
    path_rng,
    run_exit_mc,
)
from .quasipotential import QuasiPotentialResult, barrier_height

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_FLAGGED = 0, 2, 3, 4


def sha256_file(path) -> str:
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def _write(out, name, text) -> str:
    path = os.path.join(out, name)
    rpt.write_text(path, text)
    return name


def _manifest(out, command, cfg, files, extra=None) -> None:
    # the worker count is deliberately left out: it never changes results
    echo = [(k, v) for k, v in cfg.raw.items() if k != "run.workers"]
    f = {"command": command, "seed": cfg.seed, "config.lines": len(echo)}
    for i, (k, v) in enumerate(echo):
        f[f"config.{i}"] = f"{k} = {v}"
    for k, v in (extra or {}).items():
        f[k] = v
    f["files.count"] = len(files)
    for i, name in enumerate(files):
        f[f"files.{i}.name"] = name
        f[f"files.{i}.sha256"] = sha256_file(os.path.join(out, name))
    rpt.write_text(os.path.join(out, "manifest.txt"), rpt.dumps("manifest", f))


def _experiment(cfg: ExperimentConfig, barrier=None, schedule=None) -> ExitExperiment:
    system = cfg.system()
    return ExitExperiment(
        system, cfg.measure(), tuple(cfg.start(system.dim)),
        tuple(schedule if schedule is not None else cfg.get("run.eps", (0.4, 0.3, 0.2, 0.15))),
        cfg.get("run.n", 2000), t_cap_value(cfg), cfg.seed, dt=cfg.get("run.dt"), workers=cfg.workers,
        barrier=barrier, window_delta=cfg.get("kramers.window_delta"),
        location_delta=cfg.get("kramers.location_delta", 0.25),
    )


def _barrier(cfg: ExperimentConfig, out: str, files: list):
    """Barrier-height result loaded from ``kramers.qp_report`` or computed and written."""
    system, measure = cfg.system(), cfg.measure()
    path = cfg.get("kramers.qp_report")
    if path is None:
        res = barrier_height(system, measure, cfg.qp_options())
        files.append(_write(out, "quasipotential.txt", res.to_text()))
        path = os.path.join(out, "quasipotential.txt")
    else:
        with open(path, encoding="utf-8") as fh:
            res = QuasiPotentialResult.from_text(fh.read(), system, measure)
    return res, sha256_file(path)


# ---------------------------------------------------------------------------
# commands


def cmd_simulate(cfg: ExperimentConfig, out: str) -> int:
    system, measure = cfg.system(), cfg.measure()
    eps = cfg.require("run.eps")[0]
    T = cfg.require("run.horizon")
    n = cfg.get("run.n", 1)
    x = cfg.start(system.dim)
    files = []
    for i in range(n):
        tr = simulate_sde(system, measure, x, eps, T, rng=path_rng(cfg.seed, 0, i), dt=cfg.get("run.dt"))
        files.append(_write(out, f"trajectory_{i:05d}.csv", tr.to_csv()))
    _manifest(out, "simulate", cfg, files)
    return EXIT_OK


def cmd_sample_measure(cfg: ExperimentConfig, out: str) -> int:
    measure = cfg.measure()
    n = cfg.get("sample.n", 10000)
    z = measure.sample(path_rng(cfg.seed, 0, 0), n).reshape(n, -1)
    d = z.shape[1]
    files = [_write(out, "marks.csv", rpt.csv_text([f"z_{i}" for i in range(d)], z))]
    m = measure.effective_mass()
    summary = {
        "n": n,
        "effective_mass": m,
        "sample.mean": z.mean(axis=0),
        "exact.mean": np.asarray(measure.first_moment()) / m,
        "sample.second": float(np.mean(np.sum(z * z, axis=1))),
        "exact.second": measure.second_moment() / m,
    }
    files.append(_write(out, "sample_summary.txt", rpt.dumps("sample-measure", summary)))
    _manifest(out, "sample-measure", cfg, files)
    return EXIT_OK


def cmd_quasipotential(cfg: ExperimentConfig, out: str) -> int:
    res = barrier_height(cfg.system(), cfg.measure(), cfg.qp_options())
    name = _write(out, "quasipotential.txt", res.to_text())
    _manifest(out, "quasipotential", cfg, [name], {"value": res.value,
                                                   "value.recheck": entropy(res.control, cfg.measure())})
    return EXIT_OK


def _exit_report(cfg, out, command, with_barrier: bool, strict: bool) -> int:
    files: list = []
    barrier, digest = (None, None)
    if with_barrier or cfg.get("kramers.qp_report") is not None:
        barrier, digest = _barrier(cfg, out, files)
    exp = _experiment(cfg, barrier)
    rep = run_exit_mc(exp)
    rep.qp_sha256 = digest
    flagged = rep.invalid_for_mean
    extra = {}
    if barrier is not None:
        loc = exit_location_stats(exp, exp.location_delta, rep.samples)
        extra = {
            "location.mode": loc.mode,
            "location.prob": loc.prob,
            "location.nondecreasing": loc.nondecreasing,
            "window.nondecreasing": nondecreasing_within_ci(
                [r.window_prob for r in rep.rows], [r.window_lo for r in rep.rows], [r.window_hi for r in rep.rows]),
        }
    files.append(_write(out, f"{command}.txt", rep.to_text()))
    files.append(_write(out, f"{command}.csv", rep.table()))
    extra["flags"] = ", ".join(rep.flags) if rep.flags else "none"
    _manifest(out, command, cfg, files, extra)
    return EXIT_FLAGGED if (strict and flagged) else EXIT_OK


def cmd_exit_stats(cfg, out, strict=False) -> int:
    return _exit_report(cfg, out, "exit-stats", False, strict)


def cmd_kramers(cfg, out, strict=False) -> int:
    return _exit_report(cfg, out, "kramers", True, strict)


def cmd_cycle_diag(cfg, out, strict=False) -> int:
    rho, rho_p = cfg.require("cycle.rho"), cfg.require("cycle.rho_prime")
    exp = _experiment(cfg)
    rows = cycle_diagnostic(exp, rho, rho_p)
    header = ("eps", "q_hat", "mean_attempts", "mean_cycle", "mean_exit_time", "wald_ratio",
              "chi2_stat", "chi2_dof", "chi2_pvalue", "timeout_fraction")
    table = rpt.csv_text(header, [(c.eps, c.q_hat, c.mean_attempts, c.mean_cycle, c.mean_exit_time, c.wald_ratio,
                                   c.chi2_stat, c.chi2_dof, c.chi2_pvalue, c.timeout_fraction) for c in rows])
    f = {"rho": rho, "rho_prime": rho_p}
    for i, c in enumerate(rows):
        f[f"rows.{i}.eps"] = c.eps
        f[f"rows.{i}.q_hat"] = c.q_hat
        f[f"rows.{i}.wald_ok"] = c.wald_ok
        f[f"rows.{i}.geometric_ok"] = c.geometric_ok
    files = [_write(out, "cycle.txt", rpt.dumps("cycle-diag", f)), _write(out, "cycle.csv", table)]
    _manifest(out, "cycle-diag", cfg, files)
    flagged = any(not (c.wald_ok and c.geometric_ok) for c in rows)
    return EXIT_FLAGGED if (strict and flagged) else EXIT_OK


def cmd_is_exit(cfg, out, strict=False) -> int:
    files: list = []
    barrier, digest = _barrier(cfg, out, files)
    eps = cfg.get("is.eps", cfg.get("run.eps", (0.3,))[0])
    exp = _experiment(cfg, barrier, schedule=(eps,))
    horizon = cfg.get("is.horizon", float(barrier.control.horizon))
    direct = importance_sampled_exit(exp, None, 0, horizon)
    weighted = importance_sampled_exit(exp, barrier.control, 0, horizon)
    f = {"eps": eps, "horizon": horizon, "qp_report.sha256": digest}
    for tag, e in (("direct", direct), ("weighted", weighted)):
        f[f"{tag}.estimate"] = e.estimate
        f[f"{tag}.std_error"] = e.std_error
        f[f"{tag}.ess"] = e.ess
        f[f"{tag}.flags"] = ", ".join(e.flags) if e.flags else "none"
    lo1, hi1 = direct.ci()
    lo2, hi2 = weighted.ci()
    f["ci_overlap"] = bool(hi1 >= lo2 and hi2 >= lo1)
    files.append(_write(out, "is-exit.txt", rpt.dumps("is-exit", f)))
    _manifest(out, "is-exit", cfg, files)
    return EXIT_FLAGGED if (strict and not weighted.reliable) else EXIT_OK


COMMANDS = {
    "simulate": lambda cfg, out, strict: cmd_simulate(cfg, out),
    "sample-measure": lambda cfg, out, strict: cmd_sample_measure(cfg, out),
    "quasipotential": lambda cfg, out, strict: cmd_quasipotential(cfg, out),
    "exit-stats": cmd_exit_stats,
    "kramers": cmd_kramers,
    "cycle-diag": cmd_cycle_diag,
    "is-exit": cmd_is_exit,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="levyexit", description="Exit problems under small accelerated jump noise.")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", required=True, help="key = value experiment config")
    p.add_argument("--seed", type=int, help="master seed (overrides run.seed)")
    p.add_argument("--workers", type=int, help="worker processes (overrides run.workers)")
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--strict", action="store_true", help="exit with status 4 on flagged results")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.seed is not None and not 0 <= args.seed < 2 ** 64:
            raise ConfigurationError("seed must be an unsigned 64-bit integer")
        if args.workers is not None and args.workers < 1:
            raise ConfigurationError("--workers must be at least 1")
        cfg = ExperimentConfig.load(args.config).override(seed=args.seed, workers=args.workers)
        os.makedirs(args.out, exist_ok=True)
        return COMMANDS[args.command](cfg, args.out, args.strict)
    except (ConfigurationError, OSError) as exc:
        print(f"levyexit: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (LevyExitError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"levyexit: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
