"""Monte Carlo exit experiments: mean exit times, exit windows, exit locations, cycles.

Path ``i`` at schedule index ``k`` always uses the generator
``Generator(PCG64(SeedSequence(seed, spawn_key=(k, i))))``, so results never depend on
how paths are distributed over workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .dynamics import EXIT, TARGET, TIMEOUT, PathRunner, SystemSpec, first_exit
from .errors import ConfigurationError
from .measures import LevyMeasure
from .parallel import batched, ordered_map
from .quasipotential import QuasiPotentialResult
from . import report as rpt

BOOTSTRAP = 1000
_BOOT_KEY = 1 << 30
INVALID_FOR_MEAN = "INVALID-FOR-MEAN"
UNRELIABLE = "UNRELIABLE"


def path_rng(seed: int, eps_index: int, path_index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(eps_index, path_index))))


@dataclass(frozen=True)
class TCapPolicy:
    """``t_cap(eps) = clip(factor * exp(v_bar / eps), floor, ceiling)``."""

    factor: float = 20.0
    floor: float = 50.0
    ceiling: float = 1e6

    def __call__(self, eps: float, v_bar: float | None) -> float:
        if v_bar is None or not math.isfinite(v_bar):
            return self.ceiling
        return float(min(self.ceiling, max(self.floor, self.factor * math.exp(min(v_bar / eps, 700.0)))))


@dataclass
class ExitExperiment:
    system: SystemSpec
    measure: LevyMeasure
    x: tuple[float, ...] = (0.0,)
    eps_schedule: tuple[float, ...] = (0.4, 0.3, 0.2, 0.15)
    n_paths: int = 2000
    t_cap: TCapPolicy | float = field(default_factory=TCapPolicy)
    seed: int = 0
    control: object | None = None
    dt: float | None = None
    workers: int = 1
    barrier: QuasiPotentialResult | None = None
    window_delta: float | None = None
    location_delta: float = 0.25
    batch: int = 25

    def __post_init__(self):
        self.x = tuple(float(v) for v in np.atleast_1d(self.x))
        self.eps_schedule = tuple(float(e) for e in self.eps_schedule)
        if any(b >= a for a, b in zip(self.eps_schedule, self.eps_schedule[1:])):
            raise ConfigurationError("the epsilon schedule must be strictly decreasing")
        if self.n_paths < 100:
            raise ConfigurationError("at least 100 paths per epsilon are required")
        if len(self.x) != self.system.dim:
            raise ConfigurationError("start point dimension does not match the system")

    @property
    def v_bar(self) -> float | None:
        return None if self.barrier is None else self.barrier.value

    def cap(self, eps: float) -> float:
        if isinstance(self.t_cap, TCapPolicy):
            return self.t_cap(eps, self.v_bar)
        return float(self.t_cap)


@dataclass
class ExitSample:
    eps: float
    t_cap: float
    times: np.ndarray
    points: np.ndarray
    exited: np.ndarray
    log_weights: np.ndarray

    @property
    def timeout_fraction(self) -> float:
        return float(np.mean(~self.exited))


def _exit_batch(args):
    system, measure, x, eps, k, idx, seed, t_cap, dt, control = args
    out = []
    for i in idx:
        r = first_exit(system, measure, x, eps, path_rng(seed, k, i), dt=dt, t_cap=t_cap, control=control)
        out.append((r.status == EXIT, r.time, r.point, r.log_weight))
    return out


def simulate_exits(exp: ExitExperiment, k: int, control=None, t_cap: float | None = None) -> ExitSample:
    """First exits of all paths at schedule index ``k``."""
    eps = exp.eps_schedule[k]
    cap = exp.cap(eps) if t_cap is None else float(t_cap)
    x = np.array(exp.x)
    jobs = [(exp.system, exp.measure, x, eps, k, b, exp.seed, cap, exp.dt, control)
            for b in batched(range(exp.n_paths), exp.batch)]
    rows = [r for part in ordered_map(_exit_batch, jobs, exp.workers) for r in part]
    return ExitSample(
        eps, cap,
        np.array([r[1] for r in rows]),
        np.array([r[2] for r in rows]).reshape(len(rows), -1),
        np.array([r[0] for r in rows], dtype=bool),
        np.array([r[3] for r in rows]),
    )


def bootstrap_ci(values: np.ndarray, stat, rng: np.random.Generator, n_boot: int = BOOTSTRAP,
                 level: float = 0.95) -> tuple[float, float]:
    """Percentile interval of ``stat`` over path-level resamples (``stat`` acts on axis 1)."""
    values = np.asarray(values)
    n = len(values)
    est = np.empty(n_boot)
    for lo in range(0, n_boot, 100):
        hi = min(n_boot, lo + 100)
        idx = rng.integers(0, n, size=(hi - lo, n))
        est[lo:hi] = stat(values[idx])
    a = (1.0 - level) / 2.0
    return float(np.quantile(est, a)), float(np.quantile(est, 1.0 - a))


def _boot_rng(seed: int, k: int, tag: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(k, _BOOT_KEY + tag))))


def nondecreasing_within_ci(values, lo, hi) -> bool:
    """Each value may drop below its predecessor only as far as the two intervals still overlap."""
    return all(hi[i + 1] >= lo[i] for i in range(len(values) - 1))


@dataclass
class KramersRow:
    eps: float
    n: int
    mean: float
    ci_lo: float
    ci_hi: float
    eps_ln_mean: float
    timeout_fraction: float
    window_prob: float
    window_lo: float
    window_hi: float
    concentration: float
    conc_lo: float
    conc_hi: float
    invalid: bool


TABLE_HEADER = ("eps", "n", "mean", "ci_lo", "ci_hi", "eps_ln_mean", "timeout_fraction",
                "window_prob", "window_lo", "window_hi", "concentration", "conc_lo", "conc_hi")


@dataclass
class KramersReport:
    rows: list[KramersRow]
    v_bar: float | None
    window_delta: float | None
    location_delta: float
    z_star: list[np.ndarray]
    symmetric: bool
    spearman: float | None
    trend_slope: float | None
    trend_intercept: float | None
    histogram: list[dict]
    flags: list[str]
    samples: list[ExitSample] = field(default_factory=list, repr=False)
    qp_sha256: str | None = None

    @property
    def invalid_for_mean(self) -> bool:
        return INVALID_FOR_MEAN in self.flags

    def table(self) -> str:
        return rpt.csv_text(TABLE_HEADER, [
            (r.eps, r.n, r.mean, r.ci_lo, r.ci_hi, r.eps_ln_mean, r.timeout_fraction, r.window_prob,
             r.window_lo, r.window_hi, r.concentration, r.conc_lo, r.conc_hi) for r in self.rows
        ])

    def to_text(self) -> str:
        f: dict = {
            "v_bar": self.v_bar,
            "v_bar.label": "certified upper bound",
            "window_delta": self.window_delta,
            "location_delta": self.location_delta,
            "location.mode": "symmetric-pair" if self.symmetric else "unique",
            "z_star.count": len(self.z_star),
        }
        for i, z in enumerate(self.z_star):
            f[f"z_star.{i}"] = z
        f["trend.spearman"] = self.spearman
        f["trend.slope"] = self.trend_slope
        f["trend.intercept"] = self.trend_intercept
        f["flags"] = ", ".join(self.flags) if self.flags else "none"
        f["qp_report.sha256"] = self.qp_sha256
        f["rows.count"] = len(self.rows)
        f["rows.header"] = ", ".join(TABLE_HEADER)
        for i, r in enumerate(self.rows):
            f[f"rows.{i}"] = [r.eps, r.n, r.mean, r.ci_lo, r.ci_hi, r.eps_ln_mean, r.timeout_fraction,
                              r.window_prob, r.window_lo, r.window_hi, r.concentration, r.conc_lo, r.conc_hi]
            f[f"rows.{i}.invalid"] = r.invalid
        for i, h in enumerate(self.histogram):
            f[f"histogram.{i}.eps"] = h["eps"]
            f[f"histogram.{i}.centers"] = h["centers"]
            f[f"histogram.{i}.counts"] = h["counts"]
        return rpt.dumps("kramers", f)


def _argmin_points(exp: ExitExperiment) -> tuple[list[np.ndarray], bool]:
    b = exp.barrier
    if b is None:
        return [], False
    if b.unique_argmin:
        return [np.asarray(b.z, dtype=float)], False
    return [np.asarray(z, dtype=float) for z in b.argmin_set], True


def _near(points: np.ndarray, targets: list[np.ndarray], delta: float) -> np.ndarray:
    if math.isinf(delta):
        return np.ones(len(points), dtype=bool)
    if not targets:
        return np.zeros(len(points), dtype=bool)
    d = np.min([np.linalg.norm(points - z[None, :], axis=1) for z in targets], axis=0)
    return d < delta


def _histogram(exp: ExitExperiment, sample: ExitSample) -> dict:
    """Exit counts by nearest boundary sample point."""
    if exp.barrier is not None and exp.barrier.boundary:
        centers = np.array([z for z, _ in exp.barrier.boundary])
    elif exp.system.domain.bounded:
        centers = exp.system.domain.boundary_points(2 if exp.system.dim == 1 else 16)
    else:
        centers = np.zeros((0, exp.system.dim))
    counts = np.zeros(len(centers), dtype=int)
    pts = sample.points[sample.exited]
    if len(centers) and len(pts):
        d = np.linalg.norm(pts[:, None, :] - centers[None, :, :], axis=2)
        counts = np.bincount(np.argmin(d, axis=1), minlength=len(centers))
    return dict(eps=sample.eps, centers=centers.ravel() if exp.system.dim == 1 else centers, counts=counts)


def run_exit_mc(exp: ExitExperiment) -> KramersReport:
    """Exit statistics along the epsilon schedule, compared against ``exp.barrier``."""
    v_bar = exp.v_bar
    delta_w = exp.window_delta if exp.window_delta is not None else (0.5 * v_bar if v_bar is not None else None)
    targets, symmetric = _argmin_points(exp)
    rows, hists, samples, flags = [], [], [], []
    for k, eps in enumerate(exp.eps_schedule):
        s = simulate_exits(exp, k, control=exp.control)
        samples.append(s)
        t = s.times
        mean = float(np.mean(t))
        lo, hi = bootstrap_ci(t, lambda a: a.mean(axis=1), _boot_rng(exp.seed, k, 0))
        tf = s.timeout_fraction
        invalid = tf > 0.2
        if delta_w is not None:
            inside = ((t > math.exp((v_bar - delta_w) / eps)) & (t < math.exp((v_bar + delta_w) / eps))
                      & s.exited).astype(float)
            wp = float(inside.mean())
            wlo, whi = bootstrap_ci(inside, lambda a: a.mean(axis=1), _boot_rng(exp.seed, k, 1))
        else:
            wp = wlo = whi = math.nan
        if targets:
            near = (_near(s.points, targets, exp.location_delta) & s.exited).astype(float)
            cp = float(near.mean())
            clo, chi = bootstrap_ci(near, lambda a: a.mean(axis=1), _boot_rng(exp.seed, k, 2))
        else:
            cp = clo = chi = math.nan
        rows.append(KramersRow(eps, len(t), mean, lo, hi, eps * math.log(mean) if mean > 0 else -math.inf, tf,
                               wp, wlo, whi, cp, clo, chi, invalid))
        hists.append(_histogram(exp, s))
    if any(r.invalid for r in rows):
        flags.append(INVALID_FOR_MEAN)
    spear = slope = intercept = None
    if v_bar is not None and len(rows) >= 2:
        eps = np.array([r.eps for r in rows])
        y = np.array([r.eps_ln_mean for r in rows])
        if np.all(np.isfinite(y)):
            spear = float(stats.spearmanr(np.abs(y - v_bar), eps).statistic)
            slope, intercept = (float(v) for v in np.polyfit(eps, y, 1))
    return KramersReport(rows, v_bar, delta_w, exp.location_delta, targets, symmetric, spear, slope,
                         intercept, hists, flags, samples)


@dataclass
class LocationStats:
    eps: list[float]
    prob: list[float]
    ci: list[tuple[float, float]]
    histograms: list[dict]
    mode: str
    gap: float | None

    @property
    def nondecreasing(self) -> bool:
        return nondecreasing_within_ci(self.prob, [c[0] for c in self.ci], [c[1] for c in self.ci])


def exit_location_stats(exp: ExitExperiment, delta: float, samples: list[ExitSample] | None = None) -> LocationStats:
    """``P(|X_sigma - z*| < delta)`` per epsilon (nearest argmin point when z* is not unique)."""
    if exp.barrier is None:
        raise ConfigurationError("exit-location statistics need a barrier-height result")
    targets, symmetric = _argmin_points(exp)
    if samples is None:
        samples = [simulate_exits(exp, k) for k in range(len(exp.eps_schedule))]
    probs, cis, hists = [], [], []
    for k, s in enumerate(samples):
        near = (_near(s.points, targets, delta) & (s.exited | math.isinf(delta))).astype(float)
        probs.append(float(near.mean()))
        if math.isinf(delta):
            cis.append((1.0, 1.0))
        else:
            cis.append(bootstrap_ci(near, lambda a: a.mean(axis=1), _boot_rng(exp.seed, k, 3)))
        hists.append(_histogram(exp, s))
    return LocationStats([s.eps for s in samples], probs, cis, hists,
                         "symmetric-pair" if symmetric else "unique", exp.barrier.runner_up_gap)


# ---------------------------------------------------------------------------
# cycle ladder


def _ladder_batch(args):
    system, measure, x, eps, k, idx, seed, t_cap, dt, rho, rho_p = args
    out = []
    for i in idx:
        runner = PathRunner(system, measure, x, eps, path_rng(seed, k, i), dt=dt)
        attempts = 0
        cycle_starts = []
        status = runner.run(t_cap, 1, rho)  # settle in the small ball
        while status == TARGET:
            cycle_starts.append(runner.t)
            status = runner.run(t_cap, 2, rho_p)  # leave the large ball
            if status != TARGET:
                if status == EXIT:
                    attempts += 1
                break
            attempts += 1
            status = runner.run(t_cap, 1, rho)  # return to the small ball or exit
        end = runner.t
        lengths = np.diff(np.array(cycle_starts + [end])) if cycle_starts else np.empty(0)
        # the last cycle carries the successful attempt; the others are typical returns
        out.append((status == EXIT, attempts, end, lengths[:-1], lengths[-1:]))
    return out


@dataclass
class CycleStats:
    eps: float
    q_hat: float
    attempts: np.ndarray
    mean_exit_time: float
    mean_attempts: float
    mean_cycle: float
    wald_ratio: float
    wald_ok: bool
    chi2_stat: float
    chi2_dof: int
    chi2_pvalue: float
    timeout_fraction: float

    @property
    def geometric_ok(self) -> bool:
        return not self.chi2_pvalue < 0.05


def _geometric_chi2(attempts: np.ndarray, q: float) -> tuple[float, int, float]:
    n = len(attempts)
    if q >= 1.0 or n == 0:
        return 0.0, 0, 1.0
    kmax = int(attempts.max())
    ks = np.arange(1, kmax + 1)
    p = q * (1 - q) ** (ks - 1)
    obs = np.bincount(attempts, minlength=kmax + 1)[1:]
    # merge bins from the right until every expected count is at least 5, last bin takes the tail
    edges = []
    acc_e = acc_o = 0.0
    bins_e, bins_o = [], []
    for j in range(kmax):
        acc_e += n * p[j]
        acc_o += obs[j]
        if acc_e >= 5:
            bins_e.append(acc_e)
            bins_o.append(acc_o)
            acc_e = acc_o = 0.0
    tail = n * (1 - q) ** kmax
    if bins_e:
        bins_e[-1] += acc_e + tail
        bins_o[-1] += acc_o
    bins_e, bins_o = np.array(bins_e), np.array(bins_o)
    dof = len(bins_e) - 2
    if dof < 1:
        return 0.0, 0, 1.0
    stat = float(np.sum((bins_o - bins_e) ** 2 / bins_e))
    return stat, dof, float(stats.chi2.sf(stat, dof))


def cycle_diagnostic(exp: ExitExperiment, rho: float, rho_prime: float, eps_index: int | None = None) -> list[CycleStats]:
    """Stopping-time ladder between ``B_rho`` and the complement of ``B_rho'``.

    An attempt starts when the path leaves ``B_rho'`` after a visit to ``B_rho``; it
    succeeds when the path leaves the domain before returning to ``B_rho``.
    """
    if not 0 < rho < rho_prime:
        raise ConfigurationError("need 0 < rho < rho_prime")
    ks = range(len(exp.eps_schedule)) if eps_index is None else [eps_index]
    out = []
    x = np.array(exp.x)
    for k in ks:
        eps = exp.eps_schedule[k]
        cap = exp.cap(eps)
        jobs = [(exp.system, exp.measure, x, eps, k, b, exp.seed, cap, exp.dt, rho, rho_prime)
                for b in batched(range(exp.n_paths), exp.batch)]
        rows = [r for part in ordered_map(_ladder_batch, jobs, exp.workers) for r in part]
        exited = np.array([r[0] for r in rows])
        att = np.array([r[1] for r in rows], dtype=int)[exited]
        times = np.array([r[2] for r in rows])
        lengths = np.concatenate([r[3] for r in rows if r[0]] or [np.empty(0)])
        if len(lengths) == 0:
            lengths = np.concatenate([r[4] for r in rows if r[0]] or [np.empty(0)])
        q = float(len(att) / att.sum()) if att.sum() > 0 else math.nan
        mean_t = float(times[exited].mean()) if exited.any() else math.nan
        mean_a = float(att.mean()) if len(att) else math.nan
        mean_c = float(lengths.mean()) if len(lengths) else math.nan
        ratio = mean_a * mean_c / mean_t if mean_t > 0 else math.nan
        stat, dof, pval = _geometric_chi2(att, q) if len(att) else (math.nan, 0, math.nan)
        out.append(CycleStats(eps, q, att, mean_t, mean_a, mean_c, ratio, abs(ratio - 1) <= 0.15,
                              stat, dof, pval, float(1 - exited.mean())))
    return out


# ---------------------------------------------------------------------------
# importance sampling


@dataclass
class WeightedEstimate:
    eps: float
    horizon: float
    estimate: float
    std_error: float
    ess: float
    n: int
    flags: list[str]

    @property
    def reliable(self) -> bool:
        return UNRELIABLE not in self.flags

    def ci(self, z: float = 3.0) -> tuple[float, float]:
        return self.estimate - z * self.std_error, self.estimate + z * self.std_error


def importance_sampled_exit(exp: ExitExperiment, tilt, eps_index: int = 0, horizon: float | None = None) -> WeightedEstimate:
    """Weighted estimate of ``P(sigma <= T)`` from paths driven by the tilted noise.

    ``T`` defaults to the control horizon; ``tilt=None`` gives the direct estimate with
    the same per-path generators.
    """
    if horizon is None:
        if tilt is None:
            raise ConfigurationError("a horizon is needed without a tilt")
        horizon = float(tilt.horizon)
    s = simulate_exits(exp, eps_index, control=tilt, t_cap=horizon)
    hit = s.exited & (s.times <= horizon)
    w = np.where(hit, np.exp(s.log_weights), 0.0)
    n = len(w)
    est = float(w.mean())
    se = float(w.std(ddof=1) / math.sqrt(n)) if n > 1 else math.inf
    if tilt is None or getattr(tilt, "is_identity", False):
        ess = float(n)
    else:
        all_w = np.exp(s.log_weights - s.log_weights.max())
        ess = float(all_w.sum() ** 2 / np.sum(all_w ** 2))
        if hit.any():
            hw = w[hit] / w[hit].max()
            ess = min(ess, float(hw.sum() ** 2 / np.sum(hw ** 2)))
        else:
            ess = 0.0
    flags = [UNRELIABLE] if ess < 50 else []
    return WeightedEstimate(s.eps, horizon, est, se, ess, n, flags)
