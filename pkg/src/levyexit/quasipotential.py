"""Transfer costs, quasi-potential and barrier height by optimisation over polylines.

Every value reported here is a certified upper bound: it is the entropy of an explicit
control whose controlled path is re-integrated independently and checked to end at
the target.  Two control families are available for a candidate polyline:

* ``ball``: the explicit steering control of :func:`~levyexit.controls.control_for_path`,
  which follows the polyline exactly;
* ``tilt``: piecewise exponential grid tilts from :func:`~levyexit.controls.tilt_for_path`,
  whose controlled path passes through every knot.

``family='best'`` optimises both and keeps the smaller certified value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import partial

import numpy as np
from scipy.optimize import minimize

from . import _kernels as K
from .controls import (
    BallIndicator,
    Control,
    GridTilt,
    Identity,
    Polyline,
    control_for_path,
    control_from_block,
    entropy,
    solve_controlled_ode,
    tilt_for_path,
)
from .dynamics import SystemSpec, flow_deterministic
from .errors import ConfigurationError, InfeasibleError, LevyExitError
from .measures import LevyMeasure, MarkPartition
from .parallel import ordered_map
from . import report as rpt

_PENALTY = 1e10
_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class QPOptions:
    """Optimiser settings.

    ``tol`` is the relative improvement below which knot doubling stops;
    ``value_tol`` is the absolute accuracy claimed for reported values (used by
    comparisons such as the triangle inequality and the argmin-set detection).
    """

    family: str = "tilt"
    knot_schedule: tuple[int, ...] = (1, 3, 7)
    restarts: int = 3
    horizons: tuple[float, ...] = (0.25, 0.5, 1.0, 2.0, 4.0, 8.0)
    golden_steps: int = 4
    tol: float = 1e-4
    value_tol: float = 1e-2
    endpoint_tol: float = 1e-4
    max_evals: int = 600
    h_max: float = 0.05
    cert_h: float = 0.005
    verify_dt: float = 1e-3
    mesh_points: int = 64
    mesh_rounds: int = 3
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.family not in ("ball", "tilt", "best"):
            raise ConfigurationError(f"unknown control family {self.family!r}")
        if self.restarts < 1 or not self.knot_schedule or not self.horizons:
            raise ConfigurationError("optimiser needs at least one restart, knot count and horizon")


@dataclass(frozen=True)
class PathCandidate:
    """Polyline from a fixed start; ``target`` is the terminal state it must reach."""

    times: np.ndarray
    knots: np.ndarray
    target: np.ndarray

    def polyline(self) -> Polyline:
        return Polyline(self.times, self.knots)

    @property
    def horizon(self) -> float:
        return float(self.times[-1])


@dataclass
class QuasiPotentialResult:
    value: float
    x: np.ndarray
    z: np.ndarray
    path: PathCandidate | None
    control: Control
    family: str
    horizon: float
    n_knots: int
    refinement: int
    trace: list[dict] = field(default_factory=list)
    family_values: dict[str, float] = field(default_factory=dict)
    tol: float = 0.0
    # barrier-height extras
    boundary: list[tuple[np.ndarray, float]] = field(default_factory=list)
    argmin_set: list[np.ndarray] = field(default_factory=list)
    runner_up_gap: float | None = None

    @property
    def unique_argmin(self) -> bool:
        return len(self.argmin_set) <= 1

    def to_text(self, kind: str = "quasipotential") -> str:
        """Structured report; the value is re-verifiable from the embedded control block."""
        f: dict = {
            "value": self.value,
            "value.label": "certified upper bound",
            "family": self.family,
            "x": self.x,
            "z_star": self.z,
            "horizon": self.horizon,
            "knots.count": self.n_knots,
            "refinement": self.refinement,
            "tol": self.tol,
        }
        for k in sorted(self.family_values):
            f[f"family_value.{k}"] = self.family_values[k]
        f["gap.families"] = self.gap
        f["gap.runner_up"] = self.runner_up_gap
        f["argmin.count"] = len(self.argmin_set)
        for i, z in enumerate(self.argmin_set):
            f[f"argmin.{i}"] = z
        f["boundary.count"] = len(self.boundary)
        for i, (z, v) in enumerate(self.boundary):
            f[f"boundary.{i}.z"] = z
            f[f"boundary.{i}.value"] = v
        if self.path is not None:
            f["path.times"] = self.path.times
            f["path.knots"] = ";".join(rpt.fmt(row) for row in np.atleast_2d(self.path.knots))
        for line in self.control.to_block("control"):
            k, _, v = line.partition(" = ")
            f[k] = v
        f["trace.count"] = len(self.trace)
        for i, t in enumerate(self.trace):
            f[f"trace.{i}"] = ";".join(f"{k}:{rpt.fmt(t[k])}" for k in sorted(t))
        return rpt.dumps(kind, f)

    @classmethod
    def from_text(cls, text: str, system: SystemSpec | None = None,
                  measure: LevyMeasure | None = None) -> "QuasiPotentialResult":
        raw = rpt.loads(text)
        vec = lambda s: np.atleast_1d(np.array([float(v) for v in s.split(",")]))
        ctrl = control_from_block(raw, system, measure, "control")
        path = None
        if "path.times" in raw:
            knots = np.array([vec(r) for r in raw["path.knots"].split(";")])
            path = PathCandidate(vec(raw["path.times"]), knots, vec(raw["z_star"]))
        fam = {k.split(".", 1)[1]: float(v) for k, v in raw.items() if k.startswith("family_value.")}
        gap = raw.get("gap.runner_up", "none")
        trace = []
        for i in range(int(raw.get("trace.count", "0"))):
            entry = {}
            for item in raw[f"trace.{i}"].split(";"):
                k, _, v = item.partition(":")
                entry[k] = rpt.parse_value(v)
            trace.append(entry)
        return cls(
            float(raw["value"]), vec(raw["x"]), vec(raw["z_star"]), path, ctrl, raw["family"],
            float(raw["horizon"]), int(raw["knots.count"]), int(raw["refinement"]), trace, fam,
            float(raw["tol"]),
            [(vec(raw[f"boundary.{i}.z"]), float(raw[f"boundary.{i}.value"]))
             for i in range(int(raw["boundary.count"]))],
            [vec(raw[f"argmin.{i}"]) for i in range(int(raw["argmin.count"]))],
            None if gap == "none" else float(gap),
        )

    @property
    def gap(self) -> float | None:
        """Difference between the two family values (optimality-gap heuristic)."""
        if len(self.family_values) < 2:
            return None
        vals = sorted(self.family_values.values())
        return vals[1] - vals[0]


# ---------------------------------------------------------------------------
# objectives


def _softmax(v):
    e = np.exp(v - v.max())
    return e / e.sum()


class _Objective:
    """Cost of a parameter vector (interior knots, segment-time logits) for one family."""

    def __init__(self, x, y, t, system, measure, family, opts, partition):
        self.x, self.y, self.t = x, y, t
        self.system, self.measure = system, measure
        self.family = family
        self.opts = opts
        self.d = system.dim
        self.partition = partition
        if family == "tilt":
            bm = measure.bin_moments(partition)
            self.cent = np.ascontiguousarray(bm.centroids)
            self.mass = bm.mass
            self.kargs = system.kernel_args()
        self.evals = 0
        self._bufs = None

    def unpack(self, p, m):
        knots = np.empty((m + 2, self.d))
        knots[0], knots[-1] = self.x, self.y
        knots[1:-1] = p[: m * self.d].reshape(m, self.d)
        dts = self.t * _softmax(p[m * self.d:])
        times = np.concatenate([[0.0], np.cumsum(dts)])
        times[-1] = self.t
        return knots, times

    def pack(self, knots, times):
        m = len(knots) - 2
        dts = np.diff(times)
        return np.concatenate([knots[1:-1].ravel(), np.log(np.maximum(dts, 1e-300) / self.t)])

    def _tilt_cost(self, p, m):
        if self._bufs is None or self._bufs[0] != m:
            self._bufs = (m, np.empty((m + 2, self.d)), np.empty(m + 2),
                          np.full((m + 1, self.d), np.nan), np.zeros((m + 1, self.d)))
        _, knots, times, forcing, thetas = self._bufs
        coeffs, gpar, _, _ = self.kargs
        return K.tilt_param_cost(np.ascontiguousarray(p, dtype=float), m, self.x, self.y, float(self.t),
                                 self.opts.h_max, coeffs, gpar, self.cent, self.mass, 50.0,
                                 knots, times, forcing, thetas, _PENALTY)

    def __call__(self, p, m):
        self.evals += 1
        if self.family == "tilt":
            return self._tilt_cost(p, m)
        knots, times = self.unpack(p, m)
        if np.any(np.diff(times) <= 1e-9) or not np.all(np.isfinite(knots)):
            return _PENALTY
        try:
            ctrl = control_for_path(Polyline(times, knots), self.system, self.measure)
            val = ctrl.entropy(self.measure)
        except LevyExitError:
            return _PENALTY
        return float(val) if math.isfinite(val) else _PENALTY


def _refine(knots, times):
    """Insert the midpoint of every segment."""
    mid_k = 0.5 * (knots[:-1] + knots[1:])
    mid_t = 0.5 * (times[:-1] + times[1:])
    k = np.empty((2 * len(knots) - 1, knots.shape[1]))
    t = np.empty(2 * len(times) - 1)
    k[0::2], k[1::2] = knots, mid_k
    t[0::2], t[1::2] = times, mid_t
    return k, t


def _nelder_mead(obj, p0, m, opts):
    step = np.concatenate([np.full(m * obj.d, 0.1 * (np.linalg.norm(obj.y - obj.x) + 0.1)), np.full(m + 1, 0.5)])
    best_p, best_v = p0, obj(p0, m)
    for _ in range(2):
        simplex = np.vstack([best_p] + [best_p + np.eye(len(best_p))[i] * step[i] for i in range(len(best_p))])
        res = minimize(obj, best_p, args=(m,), method="Nelder-Mead",
                       options=dict(maxfev=opts.max_evals, initial_simplex=simplex, xatol=1e-7,
                                    fatol=1e-10, adaptive=len(best_p) > 4))
        improved = best_v - res.fun
        if res.fun < best_v:
            best_p, best_v = res.x, float(res.fun)
        if improved <= opts.tol * max(abs(best_v), 1e-12):
            break
    return best_p, best_v


def _chain(args):
    """One restart chain across the knot schedule; returns the stage-wise best candidates."""
    x, y, t, system, measure, family, opts, partition, restart = args
    obj = _Objective(x, y, t, system, measure, family, opts, partition)
    rng = np.random.default_rng([opts.seed, restart, int(round(t * 1e6))])
    m = opts.knot_schedule[0]
    s = np.linspace(0.0, 1.0, m + 2)
    knots = x[None, :] + s[:, None] * (y - x)[None, :]
    times = s * t
    if restart > 0:
        knots[1:-1] += rng.normal(scale=0.3 * (np.linalg.norm(y - x) + 0.1), size=(m, obj.d))
        dts = np.diff(times) * np.exp(rng.normal(scale=0.5, size=m + 1))
        times = np.concatenate([[0.0], np.cumsum(dts / dts.sum() * t)])
    out = []
    prev = math.inf
    for stage, m_target in enumerate(opts.knot_schedule):
        while len(knots) - 2 < m_target:
            knots, times = _refine(knots, times)
        if len(knots) - 2 > m_target:
            # keep an evenly thinned subset when the schedule does not double
            keep = np.unique(np.round(np.linspace(0, len(knots) - 1, m_target + 2)).astype(int))
            knots, times = knots[keep], times[keep]
        m = len(knots) - 2
        p, v = _nelder_mead(obj, obj.pack(knots, times), m, opts)
        knots, times = obj.unpack(p, m)
        out.append(dict(stage=stage, knots=knots.copy(), times=times.copy(), value=v, evals=obj.evals))
        if math.isfinite(prev) and prev - v <= opts.tol * max(abs(v), 1e-12):
            break
        prev = min(prev, v)
    return out


def _certify(family, knots, times, x, y, system, measure, partition, opts):
    """Build the control of a candidate and verify it; returns ``(value, control)`` or None."""
    path = Polyline(times, knots)
    try:
        if family == "tilt":
            ctrl = tilt_for_path(path, system, measure, partition, h_max=opts.cert_h)
        else:
            ctrl = control_for_path(path, system, measure)
        cp = solve_controlled_ode(ctrl, system, measure, x, dt=opts.verify_dt)
    except LevyExitError:
        return None
    if np.linalg.norm(cp.terminal - y) > opts.endpoint_tol:
        return None
    return entropy(ctrl, measure), ctrl


def _flow_time_to(x, y, system, t_max=60.0, dt=1e-3, tol=1e-4):
    """Time at which the deterministic flow from ``x`` passes ``y`` (None if it does not)."""
    times, states = flow_deterministic(system, x, t_max, dt)
    dist = np.linalg.norm(states - y[None, :], axis=1)
    i = int(np.argmin(dist))
    if dist[i] > 10 * tol + 1e-3 * dt:
        return None
    lo, hi = times[max(i - 1, 0)], times[min(i + 1, len(times) - 1)]
    f = lambda s: float(np.linalg.norm(flow_deterministic(system, x, s, dt)[1][-1] - y)) if s > 0 else float(np.linalg.norm(x - y))
    for _ in range(40):
        a = hi - _GOLDEN * (hi - lo)
        b = lo + _GOLDEN * (hi - lo)
        if f(a) < f(b):
            hi = b
        else:
            lo = a
    s = 0.5 * (lo + hi)
    return s if f(s) <= tol else None


def _zero_result(x, y, t, opts, trace_note):
    ctrl = Identity(t)
    path = PathCandidate(np.array([0.0, t]), np.array([x, y]), y)
    return QuasiPotentialResult(0.0, x, y, path, ctrl, "identity", t, 0, 0, [dict(note=trace_note, value=0.0)],
                                {}, opts.value_tol)


def transfer_cost(x, y, t: float, system: SystemSpec, measure: LevyMeasure, opts: QPOptions | None = None,
                  partition: MarkPartition | None = None) -> QuasiPotentialResult:
    """Certified upper bound on the cost of steering ``x`` to ``y`` in time ``t``."""
    opts = QPOptions() if opts is None else opts
    if not t > 0:
        raise ConfigurationError("transfer time must be positive")
    x = np.asarray(x, dtype=float).reshape(-1)
    y = np.asarray(y, dtype=float).reshape(-1)
    _, path = flow_deterministic(system, x, t, min(opts.verify_dt, t / 8))
    if np.linalg.norm(path[-1] - y) <= opts.endpoint_tol:
        return _zero_result(x, y, t, opts, "deterministic flow reaches the target")
    partition = MarkPartition.default(measure) if partition is None else partition
    families = ["ball", "tilt"] if opts.family == "best" else [opts.family]
    if system.dim > 2 and "ball" in families:
        families.remove("ball")
    trace = []
    best = None
    fam_vals = {}
    for fam in families:
        jobs = [(x, y, t, system, measure, fam, opts, partition, r) for r in range(opts.restarts)]
        chains = ordered_map(_chain, jobs, opts.workers)
        cands = []
        for r, chain in enumerate(chains):
            for st in chain:
                trace.append(dict(family=fam, horizon=t, restart=r, stage=st["stage"],
                                  knots=len(st["knots"]) - 2, value=st["value"], evals=st["evals"]))
                cands.append((st["value"], r, st["stage"], st["knots"], st["times"]))
        cands.sort(key=lambda c: (c[0], c[1], c[2]))
        for val, r, stage, knots, times in cands:
            if val >= _PENALTY:
                break
            cert = _certify(fam, knots, times, x, y, system, measure, partition, opts)
            if cert is None:
                continue
            value, ctrl = cert
            fam_vals[fam] = value
            if best is None or value < best.value:
                best = QuasiPotentialResult(
                    value, x, y, PathCandidate(times, knots, y), ctrl, fam, t, len(knots) - 2, stage,
                    trace, {}, opts.value_tol,
                )
            break
    if best is None:
        raise InfeasibleError(f"no admissible certificate from {x} to {y} in time {t}")
    best.family_values = fam_vals
    best.trace = trace
    return best


def quasipotential_point(x, z, system: SystemSpec, measure: LevyMeasure, opts: QPOptions | None = None,
                         partition: MarkPartition | None = None) -> QuasiPotentialResult:
    """Certified upper bound on ``V(x, z) = inf_T V(x, z, T)``."""
    opts = QPOptions() if opts is None else opts
    x = np.asarray(x, dtype=float).reshape(-1)
    z = np.asarray(z, dtype=float).reshape(-1)
    if np.linalg.norm(z - x) <= 1e-14:
        speed = float(np.linalg.norm(system.b(x)))
        T = 1.0 if speed == 0 else min(1.0, 1e-2 * opts.endpoint_tol / speed)
        return _zero_result(x, z, T, opts, "identical endpoints")
    s = _flow_time_to(x, z, system, tol=opts.endpoint_tol)
    if s is not None and s > 0:
        return _zero_result(x, z, s, opts, "deterministic flow passes the target")
    partition = MarkPartition.default(measure) if partition is None else partition
    results = {}

    def run(T):
        if T not in results:
            try:
                results[T] = transfer_cost(x, z, T, system, measure, opts, partition)
            except InfeasibleError:
                results[T] = None
        return results[T]

    for T in opts.horizons:
        run(T)
    feasible = {T: r for T, r in results.items() if r is not None}
    if not feasible:
        raise InfeasibleError(f"no admissible certificate from {x} to {z}")
    grid = sorted(opts.horizons)
    T_best = min(feasible, key=lambda T: (feasible[T].value, T))
    i = grid.index(T_best)
    lo = grid[max(i - 1, 0)]
    hi = grid[min(i + 1, len(grid) - 1)]
    value_of = lambda T: run(T).value if run(T) is not None else math.inf
    a, b = hi - _GOLDEN * (hi - lo), lo + _GOLDEN * (hi - lo)
    for _ in range(opts.golden_steps):
        if hi - lo <= 1e-3 * hi:
            break
        if value_of(a) <= value_of(b):
            hi, b = b, a
            a = hi - _GOLDEN * (hi - lo)
        else:
            lo, a = a, b
            b = lo + _GOLDEN * (hi - lo)
    feasible = {T: r for T, r in results.items() if r is not None}
    T_best = min(feasible, key=lambda T: (feasible[T].value, T))
    best = feasible[T_best]
    trace = []
    fam_vals: dict[str, float] = {}
    for T in sorted(results):
        r = results[T]
        if r is None:
            trace.append(dict(horizon=T, value=math.inf))
            continue
        trace.extend(r.trace)
        for k, v in r.family_values.items():
            fam_vals[k] = min(fam_vals.get(k, math.inf), v)
    best = replace(best, trace=trace, family_values=fam_vals)
    return best


def _boundary_mesh(system: SystemSpec, n: int):
    """Boundary points with a parametrisation for local refinement (d <= 2)."""
    dom = system.domain
    if system.dim == 1:
        return dom.boundary_points(2), None
    if system.dim == 2:
        pts = dom.boundary_points(n)
        return pts, "planar"
    return dom.boundary_points(n), None


def _planar_refine(system, pts, i, n_new):
    """Points on the boundary between the neighbours of mesh point ``i`` (projected radially)."""
    dom = system.domain
    a, b = pts[(i - 1) % len(pts)], pts[(i + 1) % len(pts)]
    c = pts[i]
    new = []
    for u in np.linspace(0.0, 1.0, n_new + 2)[1:-1]:
        for q in (c + u * (a - c), c + u * (b - c)):
            # radial projection onto the boundary from the origin
            lo, hi = 0.0, 4.0
            for _ in range(60):
                mid = 0.5 * (lo + hi)
                if dom.contains(mid * q):
                    lo = mid
                else:
                    hi = mid
            new.append(hi * q)
    return np.array(new)


def _qp_job(args):
    z, system, measure, opts, partition = args
    try:
        return quasipotential_point(np.zeros(system.dim), z, system, measure, opts, partition)
    except InfeasibleError:
        return None


def barrier_height(system: SystemSpec, measure: LevyMeasure, opts: QPOptions | None = None,
                   partition: MarkPartition | None = None) -> QuasiPotentialResult:
    """Certified upper bound on the barrier ``inf_{z on the boundary} V(0, z)``, its argmin and gap."""
    opts = QPOptions() if opts is None else opts
    if not system.domain.bounded:
        raise ConfigurationError("the barrier height needs a bounded domain")
    partition = MarkPartition.default(measure) if partition is None else partition
    pts, mode = _boundary_mesh(system, opts.mesh_points)
    inner = replace(opts, workers=1)
    results = ordered_map(_qp_job, [(z, system, measure, inner, partition) for z in pts], opts.workers)
    table = [(z, r) for z, r in zip(pts, results)]
    if mode == "planar":
        for _ in range(opts.mesh_rounds):
            vals = [r.value if r is not None else math.inf for _, r in table]
            i = int(np.argmin(vals))
            cur = np.array([z for z, _ in table])
            new = _planar_refine(system, cur, i, 2)
            extra = ordered_map(_qp_job, [(z, system, measure, inner, partition) for z in new], opts.workers)
            table.extend(zip(new, extra))
            # keep the mesh ordered by angle for the next refinement
            table.sort(key=lambda zr: math.atan2(zr[0][1], zr[0][0]))
    feasible = [(z, r) for z, r in table if r is not None]
    if not feasible:
        raise InfeasibleError("no boundary point admits a certificate")
    feasible.sort(key=lambda zr: zr[1].value)
    z_star, best = feasible[0]
    argmin_set = [z for z, r in feasible if r.value <= best.value + 2 * opts.value_tol]
    # runner-up: best value away from a neighbourhood of z*
    scale = max(float(np.max(np.abs(pts))), 1e-12)
    far = [r.value for z, r in feasible if np.linalg.norm(z - z_star) > 0.25 * scale]
    gap = (min(far) - best.value) if far else None
    # distinct argmin points only (merge neighbours of z*)
    distinct = []
    for z in argmin_set:
        if all(np.linalg.norm(z - w) > 0.25 * scale for w in distinct):
            distinct.append(z)
    return replace(
        best,
        boundary=[(z, r.value if r is not None else math.inf) for z, r in table],
        argmin_set=distinct,
        runner_up_gap=gap,
    )


@dataclass
class ContinuityRow:
    rho: float
    value: float
    boundary_value: float
    bound: float


def continuity_probe(rho_list, system: SystemSpec, measure: LevyMeasure, opts: QPOptions | None = None,
                     n_pairs: int = 4, seed: int = 0) -> list[ContinuityRow]:
    """Worst sampled ``min_{t <= 1} V(x, y, t)`` over pairs in ``B_rho(0)`` (and near the boundary).

    ``bound`` is the largest entropy of the explicit straight-line steering control over
    time 1 among the sampled pairs.
    """
    opts = QPOptions(restarts=1, golden_steps=2) if opts is None else opts
    d = system.dim
    rows = []
    for rho in rho_list:
        if rho == 0:
            rows.append(ContinuityRow(0.0, 0.0, 0.0, 0.0))
            continue
        rng = np.random.default_rng([seed, int(round(rho * 1e9))])
        # short moves are cheapest on short horizons: probe down to rho / 4
        grid = tuple(h for h in np.geomspace(rho / 4, 1.0, 1 + max(1, math.ceil(math.log2(4 / rho))))) + (1.0,)
        ropts = replace(opts, horizons=tuple(sorted({float(h) for h in grid if h <= 1.0})))
        worst, worst_b, bound = 0.0, 0.0, 0.0
        bpts = system.domain.boundary_points(8) if system.domain.bounded else np.empty((0, d))
        for k in range(n_pairs):
            u = rng.normal(size=(2, d))
            u /= np.linalg.norm(u, axis=1, keepdims=True)
            r = rho * rng.random(2) ** (1.0 / d)
            x, y = u[0] * r[0], u[1] * r[1]
            res = quasipotential_point(x, y, system, measure, ropts)
            worst = max(worst, res.value)
            try:
                ctrl = control_for_path(Polyline.straight(x, y, 1.0), system, measure)
                bound = max(bound, entropy(ctrl, measure))
            except LevyExitError:
                bound = math.inf
            if len(bpts):
                zb = bpts[k % len(bpts)]
                xb = zb * (1 - rho / max(np.linalg.norm(zb), 1e-12))
                rb = quasipotential_point(xb, zb, system, measure, ropts)
                worst_b = max(worst_b, rb.value)
        rows.append(ContinuityRow(float(rho), worst, worst_b, bound))
    return rows
