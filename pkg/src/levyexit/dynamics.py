"""Drift fields, coefficients, domains, the deterministic flow and pathwise SDE simulation.

Between jumps the state follows the compensated drift ``b(x) - G(x) m1`` with
``m1 = int_{|z| > cutoff} z nu(dz)``; at a jump ``(t, z)`` it moves by ``eps G(x-) z``.
Inter-jump integration is RK4 landing exactly on every jump time; boundary crossings
between jumps are located by bisection on the signed distance.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _kernels as K
from .errors import ConfigurationError, HypothesisViolation, JumpCapExceeded, NumericalBlowup
from .measures import LevyMeasure
from .noise import DEFAULT_MAX_JUMPS, JumpList, JumpStream, NoiseParams, simulate_prm

TIMEOUT = "timeout"
EXIT = "exit"
TARGET = "target"


# ---------------------------------------------------------------------------
# vector fields


@dataclass(frozen=True)
class PolynomialDrift:
    """Componentwise polynomial drift ``b_i(x) = sum_k coeffs[k] x_i**k``."""

    coeffs: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "coeffs", tuple(float(c) for c in self.coeffs))
        if len(self.coeffs) == 0:
            raise ConfigurationError("drift needs at least one coefficient")

    @classmethod
    def linear(cls, rate: float = 1.0) -> "PolynomialDrift":
        return cls((0.0, -rate))

    @classmethod
    def cubic(cls) -> "PolynomialDrift":
        """``b(x) = -x**3 - x``."""
        return cls((0.0, -1.0, 0.0, -1.0))

    @property
    def name(self) -> str:
        if self.coeffs == (0.0, -1.0):
            return "linear"
        if self.coeffs == (0.0, -1.0, 0.0, -1.0):
            return "cubic"
        return "polynomial"

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.polynomial.polynomial.polyval(x, self.coeffs)

    def derivative(self, x) -> np.ndarray:
        """Diagonal of the Jacobian."""
        d = np.polynomial.polynomial.polyder(self.coeffs) if len(self.coeffs) > 1 else [0.0]
        return np.polynomial.polynomial.polyval(np.asarray(x, dtype=float), d)


@dataclass(frozen=True)
class ConstantCoefficient:
    value: float = 1.0

    kind = "constant"

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim <= 1:
            return np.float64(self.value)
        return np.full(x.shape[:-1], self.value)

    def kernel_params(self) -> float:
        return float(self.value)

    def lipschitz(self) -> float:
        return 0.0

    def growth(self) -> float:
        return abs(self.value)


@dataclass(frozen=True)
class AffineClampedCoefficient:
    """``G(x) = s max(floor, s (offset + slope . x))`` with ``s = sign(offset)``; never zero."""

    offset: float
    slope: tuple[float, ...]
    floor: float

    kind = "affine-clamped"

    def __post_init__(self):
        object.__setattr__(self, "slope", tuple(float(v) for v in np.atleast_1d(self.slope)))
        if self.offset == 0.0:
            raise ConfigurationError("affine coefficient needs a nonzero offset (G(0) != 0)")
        if not self.floor > 0:
            raise ConfigurationError("affine coefficient floor must be positive")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        s = 1.0 if self.offset >= 0 else -1.0
        v = self.offset + x @ np.asarray(self.slope)
        out = s * np.maximum(self.floor, s * v)
        return np.float64(out) if np.ndim(out) == 0 else out

    def kernel_params(self) -> np.ndarray:
        return np.array([self.offset, self.floor, *self.slope], dtype=float)

    def lipschitz(self) -> float:
        return float(np.linalg.norm(self.slope))

    def growth(self) -> float:
        return max(abs(self.offset), self.floor, self.lipschitz())


# ---------------------------------------------------------------------------
# domains


class Domain:
    dim: int
    kind_code: int

    def signed_distance(self, x) -> np.ndarray:
        raise NotImplementedError

    def contains(self, x) -> np.ndarray:
        """Open-set membership (boundary points are outside)."""
        return np.asarray(self.signed_distance(x)) < 0

    def outward_normal(self, z) -> np.ndarray:
        raise NotImplementedError

    def boundary_points(self, n: int = 64) -> np.ndarray:
        raise NotImplementedError

    def kernel_params(self) -> tuple[int, np.ndarray]:
        raise NotImplementedError

    @property
    def bounded(self) -> bool:
        return True

    def inradius(self) -> float:
        """Distance from the origin to the boundary."""
        return float(-self.signed_distance(np.zeros(self.dim)))


@dataclass(frozen=True)
class Box(Domain):
    lo: tuple[float, ...]
    hi: tuple[float, ...]

    kind_code = 1

    def __post_init__(self):
        object.__setattr__(self, "lo", tuple(float(v) for v in np.atleast_1d(self.lo)))
        object.__setattr__(self, "hi", tuple(float(v) for v in np.atleast_1d(self.hi)))
        if len(self.lo) != len(self.hi) or not all(a < 0 < b for a, b in zip(self.lo, self.hi)):
            raise ConfigurationError("box must satisfy lo < 0 < hi componentwise")

    @property
    def dim(self) -> int:
        return len(self.lo)

    def signed_distance(self, x):
        x = np.asarray(x, dtype=float)
        lo, hi = np.asarray(self.lo), np.asarray(self.hi)
        return np.maximum(lo - x, x - hi).max(axis=-1)

    def outward_normal(self, z):
        z = np.asarray(z, dtype=float)
        lo, hi = np.asarray(self.lo), np.asarray(self.hi)
        gaps = np.stack([lo - z, z - hi])
        which = np.unravel_index(np.argmax(gaps), gaps.shape)
        n = np.zeros(self.dim)
        n[which[1]] = -1.0 if which[0] == 0 else 1.0
        return n

    def boundary_points(self, n: int = 64) -> np.ndarray:
        if self.dim == 1:
            return np.array([[self.lo[0]], [self.hi[0]]])
        pts = []
        per_face = max(1, n // (2 * self.dim))
        frac = (np.arange(per_face) + 0.5) / per_face
        for i in range(self.dim):
            others = [j for j in range(self.dim) if j != i]
            for side in (self.lo[i], self.hi[i]):
                for f in frac:
                    p = np.zeros(self.dim)
                    p[i] = side
                    for j in others:
                        p[j] = self.lo[j] + f * (self.hi[j] - self.lo[j])
                    pts.append(p)
        return np.array(pts)

    def kernel_params(self):
        return 1, np.array([*self.lo, *self.hi], dtype=float)


def Interval(lo: float, hi: float) -> Box:
    return Box((lo,), (hi,))


@dataclass(frozen=True)
class Ball(Domain):
    radius: float
    center: tuple[float, ...] = (0.0,)

    kind_code = 2

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(v) for v in np.atleast_1d(self.center)))
        if not np.linalg.norm(self.center) < self.radius:
            raise ConfigurationError("ball domain must contain the origin")

    @property
    def dim(self) -> int:
        return len(self.center)

    def signed_distance(self, x):
        x = np.asarray(x, dtype=float)
        return np.linalg.norm(x - np.asarray(self.center), axis=-1) - self.radius

    def outward_normal(self, z):
        v = np.asarray(z, dtype=float) - np.asarray(self.center)
        return v / np.linalg.norm(v)

    def boundary_points(self, n: int = 64) -> np.ndarray:
        c = np.asarray(self.center)
        if self.dim == 1:
            return np.array([c - self.radius, c + self.radius])
        if self.dim == 2:
            a = 2 * np.pi * np.arange(n) / n
            return c + self.radius * np.stack([np.cos(a), np.sin(a)], axis=1)
        # spiral point set on the sphere
        i = np.arange(n) + 0.5
        g = np.pi * (3.0 - math.sqrt(5.0))
        u = 1 - 2 * i / n
        rho = np.sqrt(1 - u**2)
        pts = np.zeros((n, self.dim))
        pts[:, 0], pts[:, 1], pts[:, 2] = rho * np.cos(g * i), rho * np.sin(g * i), u
        return c + self.radius * pts

    def kernel_params(self):
        return 2, np.array([self.radius, *self.center], dtype=float)


@dataclass(frozen=True)
class WholeSpace(Domain):
    dim: int = 1

    kind_code = 0

    def signed_distance(self, x):
        x = np.asarray(x, dtype=float)
        return np.full(x.shape[:-1], -np.inf) if x.ndim > 1 else -np.inf

    def outward_normal(self, z):
        raise ConfigurationError("the whole space has no boundary")

    def boundary_points(self, n: int = 64) -> np.ndarray:
        return np.empty((0, self.dim))

    def kernel_params(self):
        return 0, np.zeros(1)

    @property
    def bounded(self) -> bool:
        return False

    def inradius(self) -> float:
        return math.inf


# ---------------------------------------------------------------------------
# system


@dataclass(frozen=True)
class SystemSpec:
    """Drift, scalar multiplicative coefficient and exit domain.

    ``c1`` and ``L`` default to values estimated on probe points; they are only used
    by :meth:`check_hypotheses`.
    """

    drift: PolynomialDrift
    coefficient: ConstantCoefficient | AffineClampedCoefficient
    domain: Domain
    c1: float | None = None
    L: float | None = None

    @property
    def dim(self) -> int:
        return self.domain.dim

    def b(self, x) -> np.ndarray:
        return self.drift(x)

    def G(self, x):
        return self.coefficient(x)

    @classmethod
    def benchmark(cls, lo: float = -1.0, hi: float = 1.0) -> "SystemSpec":
        """``b(x) = -x``, ``G = 1`` on the interval ``(lo, hi)``."""
        return cls(PolynomialDrift.linear(), ConstantCoefficient(1.0), Interval(lo, hi))

    def kernel_args(self):
        coeffs = np.asarray(self.drift.coeffs, dtype=float)
        gpar = self.coefficient.kernel_params()
        dkind, dpar = self.domain.kernel_params()
        return coeffs, gpar, dkind, dpar

    def _probe_box(self) -> tuple[np.ndarray, np.ndarray]:
        if self.domain.bounded:
            pts = self.domain.boundary_points(64)
            r = float(np.max(np.abs(pts))) if len(pts) else 1.0
        else:
            r = 2.0
        return -r * np.ones(self.dim), r * np.ones(self.dim)

    def drift_slope_bound(self, n: int = 512) -> float:
        """Largest |d b_i / d x_i| over probe points covering the domain."""
        lo, hi = self._probe_box()
        grid = np.linspace(lo.min(), hi.max(), n)
        return float(np.max(np.abs(self.drift.derivative(grid))))

    def default_dt(self) -> float:
        return 1e-3 * min(1.0, 1.0 / max(self.drift_slope_bound(), 1e-300))

    def check_hypotheses(self, n_probe: int = 256, seed: int = 0) -> dict[str, bool]:
        """Probe the standing assumptions on drift, coefficient and domain."""
        rng = np.random.default_rng(seed)
        lo, hi = self._probe_box()
        y1 = rng.uniform(lo, hi, size=(n_probe, self.dim))
        y2 = rng.uniform(lo, hi, size=(n_probe, self.dim))
        diff = y1 - y2
        inner = np.sum((self.b(y1) - self.b(y2)) * diff, axis=1)
        sq = np.sum(diff**2, axis=1)
        if self.c1 is None:
            grid = np.linspace(lo.min(), hi.max(), 1024)
            c1 = float(-np.max(self.drift.derivative(grid)))
        else:
            c1 = self.c1
        coercive = c1 > 0 and bool(np.all(inner <= -c1 * sq + 1e-12 * (1 + sq)))
        b0 = bool(np.allclose(self.b(np.zeros(self.dim)), 0.0, atol=1e-14))
        g1 = np.asarray(self.G(y1), dtype=float)
        g2 = np.asarray(self.G(y2), dtype=float)
        L = self.L if self.L is not None else max(self.coefficient.lipschitz(), self.coefficient.growth())
        lip = bool(np.all(np.abs(g1 - g2) <= L * np.sqrt(sq) + 1e-12))
        growth = bool(np.all(np.abs(g1) <= L * (1 + np.linalg.norm(y1, axis=1)) + 1e-12))
        nonzero = bool(np.all(g1 != 0))
        if self.domain.bounded:
            bpts = self.domain.boundary_points(64)
            inward = all(float(self.b(z) @ self.domain.outward_normal(z)) < 0 for z in bpts)
            origin = bool(self.domain.contains(np.zeros(self.dim)))
        else:
            inward, origin = True, True
        return {
            "drift_vanishes_at_origin": b0,
            "coercive": coercive,
            "coefficient_lipschitz": lip and growth,
            "coefficient_nonzero": nonzero,
            "domain_contains_origin": origin,
            "inward_pointing": inward,
        }

    def validate(self, **kw) -> None:
        bad = [k for k, v in self.check_hypotheses(**kw).items() if not v]
        if bad:
            raise HypothesisViolation("failed hypothesis probes: " + ", ".join(bad))


# ---------------------------------------------------------------------------
# deterministic flow


def _state(system: SystemSpec, x) -> np.ndarray:
    x = np.array(x, dtype=float).reshape(-1)
    if x.shape[0] != system.dim:
        raise ConfigurationError(f"state of dimension {x.shape[0]} for a {system.dim}-dimensional system")
    if not np.all(np.isfinite(x)):
        raise ConfigurationError("initial state must be finite")
    return x


def _integrate(system: SystemSpec, x, T: float, dt: float, shift: np.ndarray):
    if not dt > 0:
        raise ConfigurationError("dt must be positive")
    x = _state(system, x)
    n = max(1, int(math.ceil(T / dt - 1e-12))) if T > 0 else 0
    out = np.empty((n + 1, system.dim))
    if n == 0:
        out[0] = x
        return np.zeros(1), out
    coeffs, gpar, _, _ = system.kernel_args()
    bad = K.rk4_path(x, float(T), n, coeffs, gpar, shift, out)
    if bad >= 0:
        raise NumericalBlowup(f"flow left every bound at t = {bad * T / n:.6g}")
    return np.linspace(0.0, T, n + 1), out


def flow_deterministic(system: SystemSpec, x, T: float, dt: float = 1e-3):
    """RK4 path of ``dx/dt = b(x)``; returns ``(times, states)``."""
    return _integrate(system, x, T, dt, np.zeros(system.dim))


def effective_drift(system: SystemSpec, measure: LevyMeasure, x) -> np.ndarray:
    """``b(x) - G(x) m1``."""
    x = np.asarray(x, dtype=float)
    g = np.asarray(system.G(x), dtype=float)
    return system.b(x) - g[..., None] * measure.first_moment() if x.ndim > 1 else system.b(x) - g * measure.first_moment()


def compensated_flow(system: SystemSpec, measure: LevyMeasure, x, T: float, dt: float = 1e-3):
    """RK4 path of the inter-jump dynamics ``dx/dt = b(x) - G(x) m1``."""
    return _integrate(system, x, T, dt, -np.asarray(measure.first_moment(), dtype=float))


# ---------------------------------------------------------------------------
# trajectories


@dataclass
class Trajectory:
    """Breakpoints ``(time, state before, state after)`` of a cadlag path.

    The first row is the start, the last row the terminal state; jump rows carry
    ``jump=True``.  Between rows the state follows the compensated flow.
    """

    times: np.ndarray
    pre: np.ndarray
    post: np.ndarray
    jump: np.ndarray
    exited: bool = False
    exit_time: float | None = None
    exit_point: np.ndarray | None = None

    @property
    def terminal_time(self) -> float:
        return float(self.times[-1])

    @property
    def terminal_state(self) -> np.ndarray:
        return self.post[-1].copy()

    @property
    def n_jumps(self) -> int:
        return int(self.jump.sum())

    def to_csv(self, fh=None) -> str:
        d = self.pre.shape[1]
        head = ["time"] + [f"pre_{i}" for i in range(d)] + [f"post_{i}" for i in range(d)] + ["jump"]
        buf = io.StringIO()
        buf.write(",".join(head) + "\n")
        for t, a, b, j in zip(self.times, self.pre, self.post, self.jump):
            vals = [repr(float(t))] + [repr(float(v)) for v in a] + [repr(float(v)) for v in b] + [str(int(j))]
            buf.write(",".join(vals) + "\n")
        text = buf.getvalue()
        if fh is not None:
            fh.write(text)
        return text

    def state_at(self, t: float, system: SystemSpec, measure: LevyMeasure, dt: float = 1e-3) -> np.ndarray:
        """Reconstruct the state at time ``t`` from the preceding breakpoint."""
        if not self.times[0] <= t <= self.times[-1]:
            raise ValueError("time outside the trajectory")
        i = int(np.searchsorted(self.times, t, side="right")) - 1
        span = t - self.times[i]
        if span == 0:
            return self.post[i].copy()
        _, path = compensated_flow(system, measure, self.post[i], span, dt)
        return path[-1]


def simulate_sde(system: SystemSpec, measure: LevyMeasure, x, eps: float, T: float,
                 rng: np.random.Generator | None = None, dt: float | None = None,
                 jumps: JumpList | None = None, max_jumps: int = DEFAULT_MAX_JUMPS,
                 stop_at_exit: bool = False) -> Trajectory:
    """Pathwise solution on ``[0, T]``.

    ``jumps`` may be supplied explicitly (e.g. an empty list); otherwise they are drawn
    from ``rng``.  With ``stop_at_exit`` the path ends at the first exit from the domain.
    """
    x = _state(system, x)
    params = NoiseParams(eps, measure, T)
    if jumps is None:
        if rng is None:
            raise ConfigurationError("either rng or an explicit jump list is required")
        jumps = simulate_prm(params, rng, max_jumps=max_jumps)
    if len(jumps) > max_jumps:
        raise JumpCapExceeded(f"{len(jumps)} jumps exceed the cap {max_jumps}")
    if len(jumps) and (np.any(np.diff(jumps.times) <= 0) or jumps.times[0] < 0 or jumps.times[-1] > T):
        raise ConfigurationError("jump times must be strictly increasing inside [0, T]")
    dt = system.default_dt() if dt is None else dt
    coeffs, gpar, dkind, dpar = system.kernel_args()
    if not stop_at_exit:
        dkind, dpar = 0, np.zeros(1)
    elif not system.domain.contains(x):
        return Trajectory(np.zeros(1), x[None].copy(), x[None].copy(), np.zeros(1, bool), True, 0.0, x.copy())
    shift = -np.asarray(measure.first_moment(), dtype=float)
    n, d = len(jumps), system.dim
    rec = np.zeros((n, 1 + 2 * d))
    state = x.copy()
    status, idx, t = K.advance(
        state, 0.0, jumps.times, jumps.marks.reshape(n, d), 0, float(eps), coeffs, gpar, shift,
        dkind, dpar, 0, 0.0, float(dt), float(T), True, rec, True,
    )
    if status == K.STATUS_BLOWUP:
        raise NumericalBlowup(f"state left every bound near t = {t:.6g}")
    m = idx
    times = np.concatenate([[0.0], rec[:m, 0], [t]])
    pre = np.concatenate([x[None], rec[:m, 1:1 + d], state[None]])
    post = np.concatenate([x[None], rec[:m, 1 + d:], state[None]])
    flags = np.concatenate([[False], np.ones(m, bool), [False]])
    exited = status == K.STATUS_EXIT
    if exited and m > 0 and rec[m - 1, 0] == t:
        # exit at a jump: the jump row already is the terminal state
        times, pre, post, flags = times[:-1], pre[:-1], post[:-1], flags[:-1]
    return Trajectory(times, pre, post, flags, exited, t if exited else None, state.copy() if exited else None)


def step_halving_report(system: SystemSpec, measure: LevyMeasure, x, eps: float, T: float,
                        rng: np.random.Generator, dt: float | None = None, levels: int = 3) -> list[tuple[float, float]]:
    """Terminal-state change ``|X_T(h) - X_T(h/2)|`` for ``h = dt, dt/2, ...`` on one fixed jump list.

    Only the inter-jump integrator depends on the step, so the differences bound its
    bias on this realisation; they should shrink by about 16 per halving.
    """
    jumps = simulate_prm(NoiseParams(eps, measure, T), rng)
    h = system.default_dt() if dt is None else dt
    prev = simulate_sde(system, measure, x, eps, T, dt=h, jumps=jumps).terminal_state
    out = []
    for _ in range(levels):
        h /= 2
        cur = simulate_sde(system, measure, x, eps, T, dt=h, jumps=jumps).terminal_state
        out.append((2 * h, float(np.linalg.norm(cur - prev))))
        prev = cur
    return out


# ---------------------------------------------------------------------------
# first exit


@dataclass
class ExitResult:
    """Outcome of a first-exit simulation; ``status`` is ``'exit'`` or ``'timeout'``."""

    status: str
    time: float
    point: np.ndarray
    log_weight: float = 0.0
    n_jumps: int = 0

    @property
    def timeout(self) -> bool:
        return self.status == TIMEOUT


class PathRunner:
    """Stateful simulation of one path, resumable across stopping events.

    Used for the first exit and for ladders of hitting times; the noise stream is
    continued across calls, so successive stopping times live on one path.
    """

    def __init__(self, system: SystemSpec, measure: LevyMeasure, x, eps: float,
                 rng: np.random.Generator, dt: float | None = None, control=None,
                 max_jumps: int = DEFAULT_MAX_JUMPS, chunk: int = 1024):
        NoiseParams(eps, measure, 0.0)
        self.system = system
        self.measure = measure
        self.eps = float(eps)
        self.x = _state(system, x)
        self.t = 0.0
        self.dt = float(system.default_dt() if dt is None else dt)
        self.control = control
        self.stream = JumpStream(measure, eps, rng, control=control, chunk=chunk)
        self.max_jumps = max_jumps
        self.n_jumps = 0
        self.jump_log_g = 0.0
        self._args = system.kernel_args()
        self._shift = -np.asarray(measure.first_moment(), dtype=float)
        self._times = np.empty(0)
        self._marks = np.empty((0, system.dim))
        self._logg = np.empty(0)
        self._idx = 0
        self._rec = np.zeros((1, 1 + 2 * system.dim))

    def run(self, t_cap: float, target_kind: int = 0, target_radius: float = 0.0) -> str:
        """Advance until domain exit, the target event or ``t_cap``; returns the status."""
        if not math.isfinite(t_cap):
            raise ConfigurationError("t_cap must be finite")
        coeffs, gpar, dkind, dpar = self._args
        if K.domain_sd(self.x, dkind, dpar) >= 0:
            return EXIT
        if K.target_sd(self.x, target_kind, float(target_radius)) >= 0:
            return TARGET
        while True:
            if self._idx >= len(self._times):
                self._times, self._marks, self._logg = self.stream.next_chunk()
                self._idx = 0
            start = self._idx
            status, idx, t = K.advance(
                self.x, self.t, self._times, self._marks, start, self.eps, coeffs, gpar,
                self._shift, dkind, dpar, target_kind, float(target_radius), self.dt, float(t_cap),
                False, self._rec, False,
            )
            self.n_jumps += idx - start
            if idx > start:
                self.jump_log_g += float(np.sum(self._logg[start:idx]))
            self._idx = idx
            self.t = t
            if self.n_jumps > self.max_jumps:
                raise JumpCapExceeded(f"more than {self.max_jumps} jumps before t = {t:.6g}")
            if status == K.STATUS_BLOWUP:
                raise NumericalBlowup(f"state left every bound near t = {t:.6g}")
            if status == K.STATUS_EXIT:
                return EXIT
            if status == K.STATUS_TARGET:
                return TARGET
            if status == K.STATUS_HORIZON:
                return TIMEOUT

    def log_weight(self) -> float:
        """Girsanov log weight stopped at the current time."""
        if self.control is None or getattr(self.control, "is_identity", False):
            return 0.0
        upper = min(self.t, float(self.control.horizon))
        comp = self.control.compensator_integral(0.0, upper, self.measure) if upper > 0 else 0.0
        return -self.jump_log_g + comp / self.eps


def first_exit(system: SystemSpec, measure: LevyMeasure, x, eps: float, rng: np.random.Generator,
               dt: float | None = None, t_cap: float = 1e4, control=None,
               max_jumps: int = DEFAULT_MAX_JUMPS) -> ExitResult:
    """First exit time and point from the domain, or a timeout at ``t_cap``.

    With a ``control`` the path is driven by the tilted noise and the result carries
    the likelihood ratio back to the untilted law, stopped at the exit time.
    """
    x = _state(system, x)
    if not system.domain.contains(x):
        return ExitResult(EXIT, 0.0, x.copy())
    runner = PathRunner(system, measure, x, eps, rng, dt=dt, control=control, max_jumps=max_jumps)
    status = runner.run(t_cap)
    return ExitResult(status, runner.t, runner.x.copy(), runner.log_weight(), runner.n_jumps)
