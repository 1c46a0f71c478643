"""Jump-intensity controls, their entropy and the controlled ODE.

A control ``g(s, z) >= 0`` multiplies the intensity of the jump measure at time ``s``
and mark ``z``; ``g = 1`` is no intervention.  All controls here equal one beyond
their horizon.  The controlled skeleton solves

    dx/dt = b(x) + G(x) int (g(t, z) - 1) z nu(dz),

and the cost of a control is ``E_T(g) = int_0^T int l(g) dnu ds`` with
``l(g) = g ln g - g + 1``.

Families:

* :class:`Identity`, :class:`ConstantTilt`;
* :class:`GridTilt`, piecewise constant on time cells times mark cells of a
  :class:`~levyexit.measures.MarkPartition` (marks outside the bins keep level 1);
* :class:`BallIndicator`, the explicit steering control of a polyline: at time ``s``
  the intensity is raised on the ball ``B_R(c(s))`` so that the raised part has
  constant Lebesgue density ``1 / (vol |G|)``; its centroid ``c = sign(G) P`` with
  ``P = dphi/ds - b(phi)`` then produces exactly the required velocity.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.special import xlogy

from . import _kernels as K
from .dynamics import SystemSpec
from .errors import ConfigurationError, NumericalBlowup, SupportViolation
from .measures import LevyMeasure, MarkPartition, ball_volume

_GL8 = np.polynomial.legendre.leggauss(8)
_GL16 = np.polynomial.legendre.leggauss(16)
_GL64 = np.polynomial.legendre.leggauss(64)
_GL32 = np.polynomial.legendre.leggauss(32)
BALL_CELL = 0.25
N_ANGLES = 64


def ell(g) -> np.ndarray:
    """``g ln g - g + 1`` with ``l(0) = 1``."""
    g = np.asarray(g, dtype=float)
    return xlogy(g, g) - g + 1.0


def _gl_cells(edges: np.ndarray, rule=_GL8) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights of a composite Gauss-Legendre rule on consecutive cells."""
    x, w = rule
    a, b = edges[:-1, None], edges[1:, None]
    nodes = 0.5 * (b - a) * x[None, :] + 0.5 * (a + b)
    weights = 0.5 * (b - a) * w[None, :]
    return nodes.ravel(), weights.ravel()


# ---------------------------------------------------------------------------
# paths


@dataclass(frozen=True)
class Polyline:
    """Continuous piecewise-linear path through ``states[i]`` at ``times[i]`` (``times[0] = 0``)."""

    times: np.ndarray
    states: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float).reshape(-1)
        x = np.asarray(self.states, dtype=float)
        if x.ndim == 1:
            x = x.reshape(len(t), -1)
        if len(t) < 2 or x.shape[0] != len(t):
            raise ConfigurationError("a polyline needs at least two knots with matching times")
        if t[0] != 0.0 or np.any(np.diff(t) <= 0):
            raise ConfigurationError("polyline times must start at 0 and increase strictly")
        if not np.all(np.isfinite(x)):
            raise ConfigurationError("polyline knots must be finite")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "states", x)

    @classmethod
    def straight(cls, x0, x1, duration: float) -> "Polyline":
        return cls(np.array([0.0, duration]), np.array([np.atleast_1d(x0), np.atleast_1d(x1)], dtype=float))

    @property
    def duration(self) -> float:
        return float(self.times[-1])

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    @cached_property
    def velocities(self) -> np.ndarray:
        return np.diff(self.states, axis=0) / np.diff(self.times)[:, None]

    def segment(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        return np.clip(np.searchsorted(self.times, s, side="right") - 1, 0, len(self.times) - 2)

    def __call__(self, s) -> np.ndarray:
        s = np.atleast_1d(np.asarray(s, dtype=float))
        j = self.segment(s)
        return self.states[j] + (s - self.times[j])[:, None] * self.velocities[j]

    def velocity(self, s) -> np.ndarray:
        return self.velocities[self.segment(np.atleast_1d(s))]

    def concatenate(self, other: "Polyline") -> "Polyline":
        if not np.allclose(self.states[-1], other.states[0], rtol=0, atol=1e-12):
            raise ConfigurationError("polylines do not join")
        return Polyline(
            np.concatenate([self.times, self.duration + other.times[1:]]),
            np.concatenate([self.states, other.states[1:]]),
        )


# ---------------------------------------------------------------------------
# controls


class Control:
    """Common interface; rates are vectorised over arrays of times."""

    kind = "abstract"
    horizon: float
    is_identity = False

    def __call__(self, s, z, measure: LevyMeasure) -> np.ndarray:
        raise NotImplementedError

    def upper_bound(self, measure: LevyMeasure) -> float:
        raise NotImplementedError

    def time_cells(self) -> np.ndarray:
        """Cell edges in ``[0, horizon]``; the rates are smooth inside each cell."""
        return np.array([0.0, self.horizon])

    # rates at times ``s`` (arrays of shape (n,) or (n, d))
    def entropy_rate(self, s, measure) -> np.ndarray:
        raise NotImplementedError

    def mark_integral(self, s, measure) -> np.ndarray:
        raise NotImplementedError

    def compensator_rate(self, s, measure) -> np.ndarray:
        raise NotImplementedError

    def abs_first_rate(self, s, measure) -> np.ndarray:
        raise NotImplementedError

    def second_rate(self, s, measure) -> np.ndarray:
        raise NotImplementedError

    def _time_integral(self, rate, t0: float, t1: float) -> float:
        edges = self.time_cells()
        inner = edges[(edges > t0) & (edges < t1)]
        cuts = np.concatenate([[t0], inner, [t1]])
        nodes, weights = _gl_cells(cuts)
        return float(np.dot(weights, rate(nodes)))

    def entropy(self, measure: LevyMeasure) -> float:
        edges = self.time_cells()
        nodes, weights = _gl_cells(edges)
        return float(math.fsum(weights * self.entropy_rate(nodes, measure)))

    def compensator_integral(self, t0: float, t1: float, measure: LevyMeasure) -> float:
        """``int_t0^t1 int (g - 1) dnu ds``."""
        t1 = min(t1, self.horizon)
        if t1 <= t0:
            return 0.0
        return self._time_integral(lambda s: self.compensator_rate(s, measure), t0, t1)

    def to_block(self, prefix: str = "control") -> list[str]:
        raise NotImplementedError


def _fmt(v) -> str:
    return repr(float(v))


def _fmt_list(a) -> str:
    return ",".join(_fmt(v) for v in np.asarray(a, dtype=float).ravel())


@dataclass(frozen=True)
class Identity(Control):
    horizon: float = 1.0

    kind = "identity"
    is_identity = True

    def __call__(self, s, z, measure=None):
        return np.ones(np.shape(np.atleast_1d(s)))

    def upper_bound(self, measure=None) -> float:
        return 1.0

    def entropy_rate(self, s, measure=None):
        return np.zeros(np.shape(np.atleast_1d(s)))

    def mark_integral(self, s, measure):
        return np.zeros((np.size(s), measure.dim))

    def compensator_rate(self, s, measure=None):
        return np.zeros(np.shape(np.atleast_1d(s)))

    abs_first_rate = compensator_rate

    def second_rate(self, s, measure):
        return np.full(np.shape(np.atleast_1d(s)), measure.second_moment())

    def entropy(self, measure=None) -> float:
        return 0.0

    def compensator_integral(self, t0, t1, measure=None) -> float:
        return 0.0

    def to_block(self, prefix="control"):
        return [f"{prefix}.kind = identity", f"{prefix}.horizon = {_fmt(self.horizon)}"]


@dataclass(frozen=True)
class ConstantTilt(Control):
    """``g = level`` on every simulated mark for ``s < horizon``."""

    level: float
    horizon: float = 1.0

    kind = "constant-tilt"

    def __post_init__(self):
        if not self.level >= 0 or not math.isfinite(self.level):
            raise ConfigurationError("tilt level must be finite and nonnegative")
        if not self.horizon > 0:
            raise ConfigurationError("control horizon must be positive")

    @property
    def is_identity(self) -> bool:  # type: ignore[override]
        return self.level == 1.0

    def _on(self, s):
        return np.atleast_1d(np.asarray(s, dtype=float)) < self.horizon

    def __call__(self, s, z, measure=None):
        return np.where(self._on(s), self.level, 1.0)

    def upper_bound(self, measure=None) -> float:
        return max(self.level, 1.0)

    def entropy_rate(self, s, measure):
        return np.where(self._on(s), measure.effective_mass() * float(ell(self.level)), 0.0)

    def mark_integral(self, s, measure):
        on = self._on(s)
        return np.where(on[:, None], (self.level - 1.0) * measure.first_moment()[None, :], 0.0)

    def compensator_rate(self, s, measure):
        return np.where(self._on(s), (self.level - 1.0) * measure.effective_mass(), 0.0)

    def abs_first_rate(self, s, measure):
        return np.where(self._on(s), abs(self.level - 1.0) * measure.abs_first_moment(), 0.0)

    def second_rate(self, s, measure):
        return np.where(self._on(s), self.level, 1.0) * measure.second_moment()

    def entropy(self, measure) -> float:
        return self.horizon * measure.effective_mass() * float(ell(self.level))

    def to_block(self, prefix="control"):
        return [
            f"{prefix}.kind = constant-tilt",
            f"{prefix}.level = {_fmt(self.level)}",
            f"{prefix}.horizon = {_fmt(self.horizon)}",
        ]


@dataclass(frozen=True, eq=False)
class GridTilt(Control):
    """Levels ``levels[k, c]`` on time cell ``k`` times mark cell ``c``; 1 elsewhere."""

    time_knots: np.ndarray
    levels: np.ndarray
    partition: MarkPartition

    kind = "grid-tilt"

    def __post_init__(self):
        t = np.asarray(self.time_knots, dtype=float).reshape(-1)
        lv = np.asarray(self.levels, dtype=float)
        if lv.ndim == 1:
            lv = lv.reshape(1, -1)
        if len(t) < 2 or t[0] != 0.0 or np.any(np.diff(t) <= 0):
            raise ConfigurationError("time knots must start at 0 and increase strictly")
        if lv.shape != (len(t) - 1, self.partition.n_cells):
            raise ConfigurationError(f"levels must have shape {(len(t) - 1, self.partition.n_cells)}")
        if np.any(lv < 0) or not np.all(np.isfinite(lv)):
            raise ConfigurationError("levels must be finite and nonnegative")
        object.__setattr__(self, "time_knots", t)
        object.__setattr__(self, "levels", lv)

    @classmethod
    def from_thetas(cls, time_knots, thetas, partition: MarkPartition, measure: LevyMeasure) -> "GridTilt":
        """Exponential tilts ``exp(theta_k . centroid_c)`` per time cell."""
        cent = measure.bin_moments(partition).centroids
        thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
        return cls(np.asarray(time_knots, dtype=float), np.exp(thetas @ cent.T), partition)

    @property
    def horizon(self) -> float:  # type: ignore[override]
        return float(self.time_knots[-1])

    @property
    def is_identity(self) -> bool:  # type: ignore[override]
        return bool(np.all(self.levels == 1.0))

    def time_cells(self):
        return self.time_knots

    def _cell(self, s) -> tuple[np.ndarray, np.ndarray]:
        s = np.atleast_1d(np.asarray(s, dtype=float))
        k = np.clip(np.searchsorted(self.time_knots, s, side="right") - 1, 0, len(self.time_knots) - 2)
        return k, (s >= 0) & (s < self.horizon)

    def __call__(self, s, z, measure=None):
        k, on = self._cell(s)
        c = self.partition.cell_index(np.asarray(z, dtype=float).reshape(len(k), -1))
        g = self.levels[k, np.maximum(c, 0)]
        return np.where(on & (c >= 0), g, 1.0)

    def upper_bound(self, measure=None) -> float:
        return max(float(self.levels.max()), 1.0)

    def _per_cell(self, measure):
        bm = measure.bin_moments(self.partition)
        lv = self.levels
        return {
            "entropy": ell(lv) @ bm.mass,
            "mark": (lv - 1.0) @ bm.first,
            "comp": (lv - 1.0) @ bm.mass,
            "abs": np.abs(lv - 1.0) @ bm.abs_first,
            "second": (lv - 1.0) @ bm.second + measure.second_moment(),
        }

    def _rate(self, key, s, measure, off):
        k, on = self._cell(s)
        vals = self._per_cell(measure)[key][k]
        mask = on if vals.ndim == 1 else on[:, None]
        return np.where(mask, vals, off)

    def entropy_rate(self, s, measure):
        return self._rate("entropy", s, measure, 0.0)

    def mark_integral(self, s, measure):
        return self._rate("mark", s, measure, 0.0)

    def compensator_rate(self, s, measure):
        return self._rate("comp", s, measure, 0.0)

    def abs_first_rate(self, s, measure):
        return self._rate("abs", s, measure, 0.0)

    def second_rate(self, s, measure):
        return self._rate("second", s, measure, measure.second_moment())

    def entropy(self, measure) -> float:
        return float(math.fsum(np.diff(self.time_knots) * self._per_cell(measure)["entropy"]))

    def compensator_integral(self, t0, t1, measure) -> float:
        t1 = min(t1, self.horizon)
        if t1 <= t0:
            return 0.0
        lo = np.clip(self.time_knots[:-1], t0, t1)
        hi = np.clip(self.time_knots[1:], t0, t1)
        return float(math.fsum((hi - lo) * self._per_cell(measure)["comp"]))

    def concatenate(self, other: "GridTilt") -> "GridTilt":
        if other.partition != self.partition:
            raise ConfigurationError("grid tilts on different partitions")
        return GridTilt(
            np.concatenate([self.time_knots, self.horizon + other.time_knots[1:]]),
            np.concatenate([self.levels, other.levels]),
            self.partition,
        )

    # -- exact simulation of the tilted measure ----------------------------
    def sample_tilted(self, measure: LevyMeasure, epsilon: float, rng: np.random.Generator):
        """Jumps of ``N^{g/eps}`` on ``[0, horizon)`` sampled cell by cell.

        Returns ``(times, marks, g)``.  The dominating intensity of the thinning is
        the tilted intensity itself, so no proposal is rejected.
        """
        bm = measure.bin_moments(self.partition)
        n_cells = self.partition.n_cells
        tail = max(measure.effective_mass() - float(bm.mass.sum()), 0.0)
        sampler = _cell_sampler(measure, self.partition)
        out_t, out_z, out_g = [], [], []
        for k in range(len(self.time_knots) - 1):
            a, b = self.time_knots[k], self.time_knots[k + 1]
            w = np.append(bm.mass * self.levels[k], tail)
            total = float(w.sum())
            if total <= 0:
                continue
            n = int(rng.poisson(total * (b - a) / epsilon))
            times = np.sort(rng.uniform(a, b, n))
            cells = rng.choice(n_cells + 1, size=n, p=w / total)
            out_t.append(times)
            out_z.append(sampler.sample(rng, cells))
            out_g.append(np.where(cells < n_cells, self.levels[k][np.minimum(cells, n_cells - 1)], 1.0))
        d = measure.dim
        if not out_t:
            return np.empty(0), np.empty((0, d)), np.empty(0)
        return np.concatenate(out_t), np.ascontiguousarray(np.concatenate(out_z).reshape(-1, d)), np.concatenate(out_g)

    def to_block(self, prefix="control"):
        return [
            f"{prefix}.kind = grid-tilt",
            f"{prefix}.time_knots = {_fmt_list(self.time_knots)}",
            f"{prefix}.levels = " + ";".join(_fmt_list(row) for row in self.levels),
            f"{prefix}.partition.radial_edges = {_fmt_list(self.partition.radial_edges)}",
            f"{prefix}.partition.directions = " + ";".join(_fmt_list(d) for d in self.partition.directions),
        ]


@functools.lru_cache(maxsize=32)
def _cell_sampler(measure: LevyMeasure, partition: MarkPartition) -> "_CellSampler":
    return _CellSampler(measure, partition)


class _CellSampler:
    """Draw marks from the measure conditioned on a mark cell (index ``n_cells`` is the tail)."""

    def __init__(self, measure: LevyMeasure, partition: MarkPartition):
        self.measure = measure
        self.partition = partition
        self._masses: dict = {}
        self.comps = measure._components()
        self.dirs = np.asarray(partition.directions, dtype=float)
        edges = np.asarray(partition.radial_edges)
        self.edges = edges
        # component -> direction cell (ray components only)
        self.comp_dir = [None if c.direction is None else int(np.argmax(self.dirs @ c.direction)) for c in self.comps]
        if any(j is None for j in self.comp_dir) and measure.dim != 2:
            raise NotImplementedError("cell sampling of isotropic measures is implemented for d = 2")
        if measure.dim == 2:
            ang = np.arctan2(self.dirs[:, 1], self.dirs[:, 0])
            order = np.argsort(ang)
            sa = ang[order]
            nxt = np.roll(sa, -1)
            nxt[-1] += 2 * np.pi
            upper = 0.5 * (sa + nxt)
            lower = np.roll(upper, 1)
            lower[0] -= 2 * np.pi
            self.sector = np.empty((len(ang), 2))
            self.sector[order, 0] = lower
            self.sector[order, 1] = upper

    def _bin_mass(self, k, lo, hi):
        key = (k, lo, hi)
        if key not in self._masses:
            self._masses[key] = self.measure.component_mass_between(k, lo, hi)
        return self._masses[key]

    def sample(self, rng, cells) -> np.ndarray:
        d = self.measure.dim
        n_rad = self.partition.n_radial
        n_cells = self.partition.n_cells
        out = np.empty((len(cells), d))
        for c in np.unique(cells):
            idx = np.flatnonzero(cells == c)
            m = len(idx)
            if c < n_cells:
                j, i = divmod(int(c), n_rad)
                ranges = [(self.edges[i], self.edges[i + 1])]
                comps = [k for k, cd in enumerate(self.comp_dir) if cd is None or cd == j]
            else:
                j = None
                ranges = [(0.0, self.edges[0]), (self.edges[-1], math.inf)]
                comps = list(range(len(self.comps)))
            options = [(k, lo, hi) for k in comps for lo, hi in ranges]
            w = np.array([self._bin_mass(k, lo, hi) for k, lo, hi in options])
            if w.sum() <= 0:
                w = np.ones(len(options))
            pick = rng.choice(len(options), size=m, p=w / w.sum()) if len(options) > 1 else np.zeros(m, int)
            for o in np.unique(pick):
                sub = idx[pick == o]
                k, lo, hi = options[o]
                r = self.measure.sample_radius(rng, k, lo, hi, len(sub))
                direction = self.comps[k].direction
                if direction is not None:
                    out[sub] = r[:, None] * direction[None, :]
                else:
                    if j is None:
                        theta = rng.uniform(0.0, 2 * np.pi, len(sub))
                    else:
                        theta = rng.uniform(self.sector[j, 0], self.sector[j, 1], len(sub))
                    out[sub] = r[:, None] * np.stack([np.cos(theta), np.sin(theta)], axis=1)
        return out


# ---------------------------------------------------------------------------
# explicit steering control


class BallIndicator(Control):
    """Steering control of a polyline through balls of constant raised density."""

    kind = "ball-indicator"

    def __init__(self, path: Polyline, system: SystemSpec, measure: LevyMeasure):
        if path.dim != system.dim or measure.dim != system.dim:
            raise ConfigurationError("path, system and measure dimensions differ")
        if system.dim > 2:
            raise NotImplementedError("ball controls are implemented for d <= 2")
        self.path = path
        self.system = system
        self.measure = measure
        self.horizon = path.duration
        probe = np.concatenate([_gl_cells(self.time_cells(), _GL16)[0], path.times])
        self._geometry(probe)  # raises on support violations

    def __repr__(self) -> str:
        return f"BallIndicator(knots={len(self.path.times)}, horizon={self.horizon:.6g})"

    def time_cells(self):
        t = self.path.times
        pieces = [np.linspace(t[i], t[i + 1], max(1, math.ceil((t[i + 1] - t[i]) / BALL_CELL)) + 1)[:-1]
                  for i in range(len(t) - 1)]
        return np.concatenate(pieces + [[t[-1]]])

    def _support_distance(self, c: np.ndarray) -> float:
        dist = self.measure.support_distance(c)
        cut = self.measure.cutoff
        if cut > 0:
            dist = min(dist, max(float(np.linalg.norm(c)) - cut, 0.0))
        return dist

    def _geometry(self, s):
        """Center, radius, raised density ``h`` and ``G`` along the path at times ``s``."""
        s = np.atleast_1d(np.asarray(s, dtype=float))
        phi = self.path(s)
        P = self.path.velocity(s) - self.system.b(phi)
        G = np.asarray(self.system.G(phi), dtype=float).reshape(-1)
        if np.any(G == 0):
            raise ConfigurationError("the coefficient vanishes on the path")
        c = np.sign(G)[:, None] * P
        full = self.measure.cutoff == 0 and self.measure.support_distance(np.zeros(self.system.dim)) == math.inf
        if full:
            R = np.ones(len(s))
        else:
            dist = np.array([self._support_distance(ci) for ci in c])
            if np.any(dist <= 0):
                raise SupportViolation("the steering ball leaves the support of the jump measure")
            R = np.minimum(0.5 * dist, 1.0)
        h = 1.0 / (ball_volume(self.system.dim, 1.0) * R**self.system.dim * np.abs(G))
        return c, R, h, G

    def __call__(self, s, z, measure=None):
        s = np.atleast_1d(np.asarray(s, dtype=float))
        z = np.asarray(z, dtype=float).reshape(len(s), -1)
        c, R, h, _ = self._geometry(np.minimum(s, self.horizon))
        inside = (np.linalg.norm(z - c, axis=1) <= R) & (s < self.horizon) & (s >= 0)
        out = np.ones(len(s))
        if inside.any():
            with np.errstate(over="ignore"):
                out[inside] = 1.0 + h[inside] * np.exp(-self.measure.log_density(z[inside]))
        return out

    def upper_bound(self, measure=None) -> float:
        s = np.concatenate([np.linspace(a, b, 257) for a, b in zip(self.path.times[:-1], self.path.times[1:])])
        c, R, h, _ = self._geometry(s)
        d = self.system.dim
        norm = np.linalg.norm(c, axis=1, keepdims=True)
        unit = np.where(norm > 0, c / np.where(norm > 0, norm, 1.0), np.eye(d)[0])
        probes = [c + R[:, None] * unit]
        if d == 1:
            probes += [c + R[:, None] * u for u in np.linspace(-1.0, 1.0, 65)]
        else:
            for a in np.linspace(0, 2 * np.pi, 32, endpoint=False):
                probes.append(c + R[:, None] * np.array([math.cos(a), math.sin(a)]))
        logs = np.stack([self._log_nu(p) for p in probes])
        g = 1.0 + h * np.exp(-logs.min(axis=0))
        return 1.05 * float(g.max())

    def _log_nu(self, pts):
        with np.errstate(divide="ignore"):
            return self.measure.log_density(pts)

    # -- per-time integrals over the ball ----------------------------------
    def _ball_quadrature(self, c, R):
        """Nodes ``(n, q, d)`` and weights ``(n, q)`` on the balls ``B_R(c)``."""
        d = self.system.dim
        if d == 1:
            x, w = _GL64
            a = c[:, 0] - R
            b = c[:, 0] + R
            m = np.clip(0.0, a, b)
            n1 = 0.5 * (m - a)[:, None] * x[None, :] + 0.5 * (m + a)[:, None]
            n2 = 0.5 * (b - m)[:, None] * x[None, :] + 0.5 * (b + m)[:, None]
            nodes = np.concatenate([n1, n2], axis=1)[:, :, None]
            weights = np.concatenate([0.5 * (m - a)[:, None] * w[None, :], 0.5 * (b - m)[:, None] * w[None, :]], axis=1)
            return nodes, weights
        xr, wr = _GL32
        rr = 0.5 * (xr + 1.0)
        ang = 2 * np.pi * np.arange(N_ANGLES) / N_ANGLES
        unit = np.stack([np.cos(ang), np.sin(ang)], axis=1)
        rad = R[:, None] * rr[None, :]
        nodes = c[:, None, None, :] + rad[:, :, None, None] * unit[None, None, :, :]
        weights = (0.5 * R[:, None] * wr[None, :] * rad)[:, :, None] * (2 * np.pi / N_ANGLES) * np.ones((1, 1, N_ANGLES))
        n = len(R)
        return nodes.reshape(n, -1, 2), weights.reshape(n, -1)

    def _over_ball(self, s, f):
        c, R, h, G = self._geometry(s)
        nodes, weights = self._ball_quadrature(c, R)
        n, q, d = nodes.shape
        logs = self._log_nu(nodes.reshape(-1, d)).reshape(n, q)
        return np.sum(weights * f(nodes, logs, h[:, None]), axis=1), (c, R, h, G)

    def entropy_rate(self, s, measure=None):
        s = np.atleast_1d(np.asarray(s, dtype=float))

        def f(nodes, logs, h):
            lh = np.log(h)
            with np.errstate(over="ignore", invalid="ignore"):
                val = (np.exp(logs) + h) * np.logaddexp(0.0, lh - logs) - h
            return np.where(np.isfinite(logs), val, 0.0)

        val, _ = self._over_ball(np.minimum(s, self.horizon), f)
        return np.where(s <= self.horizon, val, 0.0)

    def mark_integral(self, s, measure=None):
        s = np.atleast_1d(np.asarray(s, dtype=float))
        c, R, h, G = self._geometry(np.minimum(s, self.horizon))
        out = c / np.abs(G)[:, None]
        return np.where((s <= self.horizon)[:, None], out, 0.0)

    def compensator_rate(self, s, measure=None):
        s = np.atleast_1d(np.asarray(s, dtype=float))
        _, _, _, G = self._geometry(np.minimum(s, self.horizon))
        return np.where(s <= self.horizon, 1.0 / np.abs(G), 0.0)

    def abs_first_rate(self, s, measure=None):
        s = np.atleast_1d(np.asarray(s, dtype=float))
        c, R, h, G = self._geometry(np.minimum(s, self.horizon))
        if self.system.dim == 1:
            a, b = c[:, 0] - R, c[:, 0] + R
            val = h * 0.5 * (np.sign(b) * b**2 - np.sign(a) * a**2)
        else:
            nodes, weights = self._ball_quadrature(c, R)
            val = h * np.sum(weights * np.linalg.norm(nodes, axis=2), axis=1)
        return np.where(s <= self.horizon, val, 0.0)

    def second_rate(self, s, measure=None):
        s = np.atleast_1d(np.asarray(s, dtype=float))
        c, R, h, G = self._geometry(np.minimum(s, self.horizon))
        d = self.system.dim
        vol = ball_volume(d, 1.0) * R**d
        raised = h * vol * (np.sum(c**2, axis=1) + d / (d + 2.0) * R**2)
        return self.measure.second_moment() + np.where(s <= self.horizon, raised, 0.0)

    def entropy(self, measure=None) -> float:
        nodes, weights = _gl_cells(self.time_cells())
        return float(math.fsum(weights * self.entropy_rate(nodes)))

    def compensator_integral(self, t0, t1, measure=None) -> float:
        t1 = min(t1, self.horizon)
        if t1 <= t0:
            return 0.0
        return self._time_integral(lambda s: self.compensator_rate(s), t0, t1)

    def to_block(self, prefix="control"):
        return [
            f"{prefix}.kind = ball-indicator",
            f"{prefix}.path.times = {_fmt_list(self.path.times)}",
            f"{prefix}.path.states = " + ";".join(_fmt_list(x) for x in self.path.states),
        ]


def control_from_block(values: dict[str, str], system: SystemSpec | None = None,
                       measure: LevyMeasure | None = None, prefix: str = "control") -> Control:
    """Inverse of ``Control.to_block`` (``values`` maps dotted keys to raw strings)."""

    def get(key):
        try:
            return values[f"{prefix}.{key}"]
        except KeyError:
            raise ConfigurationError(f"missing control field {prefix}.{key}") from None

    def floats(text):
        return np.array([float(v) for v in text.split(",")]) if text.strip() else np.empty(0)

    kind = get("kind").strip()
    if kind == "identity":
        return Identity(float(get("horizon")))
    if kind == "constant-tilt":
        return ConstantTilt(float(get("level")), float(get("horizon")))
    if kind == "grid-tilt":
        part = MarkPartition(
            tuple(floats(get("partition.radial_edges"))),
            tuple(tuple(floats(row)) for row in get("partition.directions").split(";")),
        )
        levels = np.array([floats(row) for row in get("levels").split(";")])
        return GridTilt(floats(get("time_knots")), levels, part)
    if kind == "ball-indicator":
        if system is None or measure is None:
            raise ConfigurationError("a ball control needs the system and the measure")
        times = floats(get("path.times"))
        states = np.array([floats(row) for row in get("path.states").split(";")])
        return BallIndicator(Polyline(times, states), system, measure)
    raise ConfigurationError(f"unknown control kind {kind!r}")


# ---------------------------------------------------------------------------
# operations


def entropy(control: Control, measure: LevyMeasure) -> float:
    """``E_T(g) = int_0^T int l(g) dnu ds``."""
    if not control.horizon > 0:
        raise ConfigurationError("control horizon must be positive")
    return control.entropy(measure)


@dataclass
class ControlledPath:
    times: np.ndarray
    states: np.ndarray

    @property
    def terminal(self) -> np.ndarray:
        return self.states[-1].copy()


def solve_controlled_ode(control: Control, system: SystemSpec, measure: LevyMeasure, x,
                         dt: float = 1e-3, bound: float = 1e6) -> ControlledPath:
    """RK4 solution of the controlled skeleton on ``[0, control.horizon]``."""
    x = np.array(x, dtype=float).reshape(-1)
    coeffs, gpar, _, _ = system.kernel_args()
    edges = control.time_cells()
    times, states = [np.zeros(1)], [x[None].copy()]
    piecewise = isinstance(control, (Identity, ConstantTilt, GridTilt))
    for a, b in zip(edges[:-1], edges[1:]):
        n = max(1, math.ceil((b - a) / dt - 1e-9))
        if piecewise:
            forcing = np.ascontiguousarray(control.mark_integral(np.array([0.5 * (a + b)]), measure)[0])
            out = np.empty((n + 1, system.dim))
            bad = K.rk4_path(x, float(b - a), n, coeffs, gpar, forcing, out)
            if bad >= 0:
                raise NumericalBlowup("controlled path left every bound")
        else:
            out = _rk4_time_dependent(control, system, measure, x, a, b, n)
        if not np.all(np.abs(out) < bound):
            raise NumericalBlowup("controlled path left the configured bound")
        times.append(np.linspace(a, b, n + 1)[1:])
        states.append(out[1:])
        x = out[-1].copy()
    return ControlledPath(np.concatenate(times), np.concatenate(states))


def _rk4_time_dependent(control, system, measure, x, a, b, n):
    h = (b - a) / n
    out = np.empty((n + 1, len(x)))
    out[0] = x
    # forcing at the step nodes and midpoints, computed in one vectorised call
    s = a + h * np.arange(2 * n + 1) / 2.0
    # left limit at the cell end: a path knot there switches to the next velocity
    s[-1] = np.nextafter(b, a)
    F = control.mark_integral(s, measure)

    def rhs(y, k):
        return system.b(y) + system.G(y) * F[k]

    for i in range(n):
        y = out[i]
        k1 = rhs(y, 2 * i)
        k2 = rhs(y + 0.5 * h * k1, 2 * i + 1)
        k3 = rhs(y + 0.5 * h * k2, 2 * i + 1)
        k4 = rhs(y + h * k3, 2 * i + 2)
        out[i + 1] = y + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(out[i + 1])):
            raise NumericalBlowup("controlled path became non-finite")
    return out


def control_for_path(path: Polyline, system: SystemSpec, measure: LevyMeasure) -> Control:
    """Explicit steering control of a polyline (identity when nothing needs steering)."""
    s = np.concatenate([np.linspace(a, b, 65) for a, b in zip(path.times[:-1], path.times[1:])])
    P = path.velocity(s) - system.b(path(s))
    if np.all(np.abs(P) <= 1e-14):
        return Identity(path.duration)
    return BallIndicator(path, system, measure)


def tilt_for_path(path: Polyline, system: SystemSpec, measure: LevyMeasure,
                  partition: MarkPartition | None = None, h_max: float = 0.01,
                  max_exponent: float = 50.0) -> GridTilt:
    """Piecewise exponential tilt whose controlled path passes through every knot.

    On each segment the constant forcing that steers one knot to the next is found by
    shooting; the cheapest grid tilt producing that forcing is an exponential tilt
    ``exp(theta . centroid)`` with ``theta`` from the convex dual problem.
    """
    from .errors import InfeasibleError

    partition = MarkPartition.default(measure) if partition is None else partition
    bm = measure.bin_moments(partition)
    coeffs, gpar, _, _ = system.kernel_args()
    m = len(path.times) - 1
    forcing = np.zeros((m, system.dim))
    thetas = np.zeros((m, system.dim))
    cost = K.tilt_path_cost(
        np.ascontiguousarray(path.states), path.times, h_max, coeffs, gpar,
        np.ascontiguousarray(bm.centroids), bm.mass, max_exponent, forcing, thetas,
    )
    if not math.isfinite(cost):
        raise InfeasibleError("no admissible exponential tilt for this path")
    return GridTilt.from_thetas(path.times, thetas, partition, measure)


@dataclass
class IntegrabilityReport:
    second_moment: float
    abs_first: float
    moduli: dict[float, float] = field(default_factory=dict)


def verify_control_integrability(control: Control, measure: LevyMeasure,
                                 deltas=(0.1, 0.01, 0.001)) -> IntegrabilityReport:
    """``iint |z|^2 g``, ``iint |z| |g - 1|`` and the modulus of the latter over windows."""
    T = control.horizon
    edges = control.time_cells()
    second = control._time_integral(lambda s: control.second_rate(s, measure), 0.0, T)
    fine = np.unique(np.concatenate([edges, np.linspace(0.0, T, 4097)]))
    nodes, weights = _gl_cells(fine)
    rate = control.abs_first_rate(nodes, measure)
    cum = np.concatenate([[0.0], np.cumsum((weights * rate).reshape(len(fine) - 1, -1).sum(axis=1))])
    moduli = {}
    for d in deltas:
        # cumulative integral is piecewise smooth; sup over windows on the fine grid,
        # with the upper end interpolated
        upper = np.interp(np.minimum(fine + d, T), fine, cum)
        moduli[float(d)] = float(max(np.max(upper - cum), 0.0)) if d < T else float(cum[-1])
    return IntegrabilityReport(float(second), float(cum[-1]), moduli)
