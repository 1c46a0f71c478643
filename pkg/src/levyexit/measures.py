"""Jump measures with exponentially light tails.

Three families are provided:

* :class:`ExponentialLight` -- density ``exp(-|z|**beta)``, finite mass.
* :class:`GaussTemperedStable` -- radial density ``exp(-gamma r^2 / 2) / r^(alpha+1)``
  along finitely many weighted directions, infinite mass, needs a small-jump cutoff
  for simulation.
* :class:`CompactSupport` -- bounded density on a ball (shifted intervals in d = 1).

Internally every measure is a finite sum of *radial components*: a direction law
(a fixed unit vector, or the uniform law on the sphere) times a radial mass density
``rho_k(r)`` on ``(lo_k, hi_k)``.  Moments, the inverse-CDF sampler and the mark-bin
moments used by grid controls are all computed on that decomposition.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, NamedTuple

import numpy as np
from scipy import integrate, special
from scipy.interpolate import PchipInterpolator

from .errors import ConfigurationError, DomainError

INFINITE = math.inf

QUAD_EPSABS = 1e-12
QUAD_EPSREL = 1e-10
QUAD_LIMIT = 200
DIVERGENCE_LIMIT = 1e12
N_CDF_KNOTS = 4096
_TAIL_FRACTION = 1e-15

_GL16 = np.polynomial.legendre.leggauss(16)


def sphere_area(d: int) -> float:
    """Surface measure of the unit sphere in R^d (2 for d = 1)."""
    return 2.0 * math.pi ** (d / 2) / math.gamma(d / 2)


def ball_volume(d: int, radius: float) -> float:
    return math.pi ** (d / 2) / math.gamma(d / 2 + 1) * radius**d


class _Component(NamedTuple):
    direction: np.ndarray | None  # None: uniform on the sphere
    lo: float
    hi: float


class BinMoments(NamedTuple):
    """Per mark-cell integrals of 1, z, |z|^2 and |z| against the measure."""

    mass: np.ndarray
    first: np.ndarray
    second: np.ndarray
    abs_first: np.ndarray

    @property
    def centroids(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            c = self.first / self.mass[:, None]
        return np.where(self.mass[:, None] > 0, c, 0.0)


def _quad(f: Callable[[float], float], a: float, b: float) -> float:
    if not b > a:
        return 0.0
    val, _ = integrate.quad(f, a, b, epsabs=QUAD_EPSABS, epsrel=QUAD_EPSREL, limit=QUAD_LIMIT)
    return float(val)


class LevyMeasure:
    """Common machinery; subclasses describe their radial components."""

    kind: str = "abstract"
    dim: int
    cutoff: float

    # -- subclass hooks -------------------------------------------------
    def _components(self) -> list[_Component]:
        raise NotImplementedError

    def _log_radial(self, k: int, r: np.ndarray) -> np.ndarray:
        """Log of the radial mass density of component ``k`` (all directions of the component)."""
        raise NotImplementedError

    def log_density(self, z: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def support_distance(self, c: np.ndarray) -> float:
        """Distance from ``c`` to the complement of ``supp(nu)`` (``inf`` for full support)."""
        raise NotImplementedError

    @property
    def has_pole(self) -> bool:
        return False

    # -- evaluation -----------------------------------------------------
    def _as_points(self, z) -> np.ndarray:
        pts = np.asarray(z, dtype=float)
        if pts.ndim == 0:
            pts = pts.reshape(1, 1)
        elif pts.ndim == 1:
            pts = pts.reshape(-1, 1) if self.dim == 1 else pts.reshape(1, -1)
        if pts.shape[1] != self.dim:
            raise DomainError(f"points of dimension {pts.shape[1]} for a {self.dim}-dimensional measure")
        return pts

    def density(self, z) -> float | np.ndarray:
        """Lebesgue density of the measure at ``z`` (scalar for one point)."""
        pts = self._as_points(z)
        if np.any(np.linalg.norm(pts, axis=1) == 0.0):
            raise DomainError("the jump measure lives on R^d \\ {0}; density at z = 0 is undefined")
        with np.errstate(divide="ignore"):
            out = np.exp(self.log_density(pts))
        single = np.ndim(z) == 0 or (np.ndim(z) == 1 and self.dim > 1)
        return float(out[0]) if single else out

    def _radial_density(self, k: int, r) -> np.ndarray:
        with np.errstate(divide="ignore", over="ignore", under="ignore"):
            return np.exp(self._log_radial(k, np.asarray(r, dtype=float)))

    def radial_integral(self, k: int, power: float, a: float, b: float) -> float:
        """``int_a^b r**power rho_k(r) dr`` restricted to the component's support."""
        comp = self._components()[k]
        a, b = max(a, comp.lo), min(b, comp.hi)
        if not b > a:
            return 0.0
        return _quad(lambda r: r**power * float(self._radial_density(k, r)), a, b)

    # -- moments --------------------------------------------------------
    @cached_property
    def _component_masses(self) -> tuple[float, ...]:
        return tuple(self.radial_integral(k, 0.0, 0.0, math.inf) for k in range(len(self._components())))

    def total_mass(self) -> float:
        """``nu(R^d \\ {0})``; :data:`INFINITE` for measures with a non-integrable pole."""
        if self.has_pole:
            return INFINITE
        return float(sum(self._component_masses))

    @cached_property
    def _effective_masses(self) -> tuple[float, ...]:
        return tuple(
            self.radial_integral(k, 0.0, self.cutoff, math.inf) for k in range(len(self._components()))
        )

    def effective_mass(self) -> float:
        """Mass of the simulated part ``{|z| > cutoff}``."""
        if self.has_pole and self.cutoff <= 0.0:
            raise ConfigurationError("infinite-intensity measure needs a positive small-jump cutoff")
        return float(sum(self._effective_masses))

    @cached_property
    def _first_moment(self) -> np.ndarray:
        m1 = np.zeros(self.dim)
        for k, comp in enumerate(self._components()):
            if comp.direction is not None:
                m1 += comp.direction * self.radial_integral(k, 1.0, self.cutoff, math.inf)
        return m1

    def first_moment(self) -> np.ndarray:
        """``int_{|z| > cutoff} z nu(dz)``, the compensator drift of the simulated noise."""
        if self.has_pole and self.cutoff <= 0.0:
            raise ConfigurationError("infinite-intensity measure needs a positive small-jump cutoff")
        return self._first_moment.copy()

    def second_moment_below(self, r: float) -> float:
        """``int_{0 < |z| <= r} |z|^2 nu(dz)``."""
        if not r > 0:
            if r == 0:
                return 0.0
            raise DomainError("radius must be positive")
        return float(sum(self.radial_integral(k, 2.0, 0.0, r) for k in range(len(self._components()))))

    @cached_property
    def _second_moment(self) -> float:
        return self.second_moment_below(math.inf)

    def second_moment(self) -> float:
        return self._second_moment

    @cached_property
    def _abs_first_moment(self) -> float:
        return float(
            sum(self.radial_integral(k, 1.0, self.cutoff, math.inf) for k in range(len(self._components())))
        )

    def abs_first_moment(self) -> float:
        """``int |z| nu(dz)`` over the simulated part."""
        return self._abs_first_moment

    def exp_tail_integral(self, gamma_exp: float) -> float:
        """``int_{|z| > 1} exp(Gamma |z|^2) nu(dz)``, or :data:`INFINITE` when it diverges.

        The integral is accumulated over dyadic shells ``[2^j, 2^(j+1)]``; divergence is
        declared once the running sum exceeds ``1e12`` or an integrand overflows.
        """
        if not gamma_exp > 0:
            raise DomainError("Gamma must be positive")
        total = 0.0
        for k, comp in enumerate(self._components()):
            a = max(1.0, comp.lo)
            b = comp.hi
            if not b > a:
                continue

            def log_f(r, k=k):
                return gamma_exp * r * r + self._log_radial(k, np.asarray(r, dtype=float))

            for _ in range(80):
                right = min(2.0 * a, b)
                probe = np.linspace(a, right, 33)
                with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
                    peak = np.nanmax(log_f(probe))
                if peak > 700.0:
                    return INFINITE
                piece = _quad(lambda r: float(np.exp(log_f(r))), a, right)
                total += piece
                if total > DIVERGENCE_LIMIT:
                    return INFINITE
                if right >= b or (piece <= 1e-17 * max(total, 1e-300) and peak < 0):
                    break
                a = right
            else:
                return INFINITE
        return total

    def exp_tail_finite(self, gamma_exp: float) -> bool:
        """Whether the exponential tail integral converges (numerical test by default)."""
        return math.isfinite(self.exp_tail_integral(gamma_exp))

    # -- sampling -------------------------------------------------------
    def _radial_upper(self, k: int) -> float:
        comp = self._components()[k]
        if math.isfinite(comp.hi):
            return comp.hi
        start = max(comp.lo, self.cutoff)
        if self.has_pole and start <= 0.0:
            start = 1.0
        mass = self.radial_integral(k, 0.0, start, math.inf)
        r = max(1.0, 2.0 * comp.lo)
        while self.radial_integral(k, 0.0, r, math.inf) > _TAIL_FRACTION * mass:
            r *= 1.25
        return r

    @cached_property
    def _sampler(self):
        comps = self._components()
        if self.has_pole and self.cutoff <= 0.0:
            raise ConfigurationError("cannot sample an infinite-mass measure without a small-jump cutoff")
        masses = np.array(self._effective_masses)
        if not masses.sum() > 0:
            raise ConfigurationError("the measure has no mass above the cutoff")
        tables = []
        for k, comp in enumerate(comps):
            if masses[k] <= 0:
                tables.append(None)
                continue
            a = max(comp.lo, self.cutoff)
            b = self._radial_upper(k)
            if a > 0:
                knots = np.geomspace(a, b, N_CDF_KNOTS)
            else:
                knots = np.concatenate([[0.0], np.geomspace(b * 1e-9, b, N_CDF_KNOTS - 1)])
            x, w = _GL16
            left, right = knots[:-1, None], knots[1:, None]
            nodes = 0.5 * (right - left) * x[None, :] + 0.5 * (right + left)
            pieces = (0.5 * (right - left) * w[None, :] * self._radial_density(k, nodes)).sum(axis=1)
            cdf = np.concatenate([[0.0], np.cumsum(pieces)])
            cdf /= cdf[-1]
            keep = np.concatenate([[True], np.diff(cdf) > 0])
            tables.append((knots, PchipInterpolator(knots, cdf), PchipInterpolator(cdf[keep], knots[keep])))
        return masses / masses.sum(), tables

    def radial_cdf(self, r) -> np.ndarray:
        """Tabulated CDF of ``|Z|`` for ``Z`` drawn from the normalised simulated measure."""
        probs, tables = self._sampler
        r = np.asarray(r, dtype=float)
        out = np.zeros_like(r)
        for p, tab in zip(probs, tables):
            if tab is None:
                continue
            knots, fwd, _ = tab
            out += p * np.where(r <= knots[0], 0.0, np.where(r >= knots[-1], 1.0,
                                                              fwd(np.clip(r, knots[0], knots[-1]))))
        return out

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """``n`` i.i.d. marks from ``nu( . | |z| > cutoff)``, shape ``(n, dim)``."""
        probs, tables = self._sampler
        comps = self._components()
        if len(probs) > 1:
            idx = rng.choice(len(probs), size=n, p=probs)
        else:
            idx = np.zeros(n, dtype=np.intp)
        u = rng.random(n)
        iso = any(c.direction is None for c in comps)
        normals = rng.standard_normal((n, self.dim)) if iso else None
        out = np.empty((n, self.dim))
        for k, comp in enumerate(comps):
            mask = idx == k
            if not mask.any():
                continue
            knots, _, inv = tables[k]
            r = np.clip(inv(u[mask]), knots[0], knots[-1])
            if comp.direction is None:
                g = normals[mask]
                out[mask] = r[:, None] * g / np.linalg.norm(g, axis=1, keepdims=True)
            else:
                out[mask] = r[:, None] * comp.direction[None, :]
        return out

    def sample_jump(self, rng: np.random.Generator) -> np.ndarray:
        return self.sample(rng, 1)[0]

    def component_mass_between(self, k: int, lo: float, hi: float) -> float:
        lo = max(lo, self.cutoff, self._components()[k].lo)
        hi = min(hi, self._components()[k].hi)
        return self.radial_integral(k, 0.0, lo, hi) if hi > lo else 0.0

    def sample_radius(self, rng: np.random.Generator, k: int, lo: float, hi: float, n: int) -> np.ndarray:
        """Radii of component ``k`` conditioned on ``lo < r <= hi`` (inverse CDF on the table)."""
        _, tables = self._sampler
        knots, fwd, inv = tables[k]
        u_lo, u_hi = np.clip(fwd(np.clip([lo, hi], knots[0], knots[-1])), 0.0, 1.0)
        u = u_lo + (u_hi - u_lo) * rng.random(n)
        return np.clip(inv(u), max(lo, knots[0]), min(hi, knots[-1]))

    # -- grid-control support -------------------------------------------
    def bin_moments(self, partition: "MarkPartition") -> BinMoments:
        return _bin_moments_cached(self, partition)

    # -- hypotheses ------------------------------------------------------
    def hypothesis_report(self, gammas=(1e-3, 1e-2, 0.1, 0.5)) -> dict[str, bool]:
        """Numerical status of the standing assumptions on the jump measure."""
        finite = math.isfinite(self.total_mass())
        exp_ok = any(math.isfinite(self.exp_tail_integral(g)) for g in gammas)
        levy = math.isfinite(self.second_moment_below(1.0)) and math.isfinite(
            sum(self.radial_integral(k, 0.0, 1.0, math.inf) for k in range(len(self._components())))
        )
        eps = np.logspace(-1, -6, 6)
        small = [abs(math.log(e)) * self.second_moment_below(math.sqrt(e) * abs(math.log(e))) for e in eps]
        return {
            "finite_mass": finite,
            "exponential_moment": exp_ok,
            "full_support_density": self.support_distance(np.full(self.dim, 0.5)) == math.inf,
            "levy_integrability": levy,
            "small_jump_scaling": bool(np.all(np.isfinite(small)) and small[-1] <= small[0] + 1e-12),
        }


@dataclass(frozen=True)
class ExponentialLight(LevyMeasure):
    """``nu(dz) = exp(-|z|**beta) dz`` with ``beta >= 2``."""

    beta: float = 2.0
    dim: int = 1
    cutoff: float = 0.0

    kind = "exponential-light"

    def __post_init__(self):
        if not self.beta >= 2.0:
            raise ConfigurationError("exponential-light measure needs beta >= 2")
        if self.dim < 1:
            raise ConfigurationError("dimension must be positive")
        if self.cutoff < 0:
            raise ConfigurationError("cutoff must be nonnegative")

    def _components(self):
        if self.dim == 1:
            return [_Component(np.array([1.0]), 0.0, math.inf), _Component(np.array([-1.0]), 0.0, math.inf)]
        return [_Component(None, 0.0, math.inf)]

    def _log_radial(self, k, r):
        if self.dim == 1:
            return -(r**self.beta)
        with np.errstate(divide="ignore"):
            return math.log(sphere_area(self.dim)) + (self.dim - 1) * np.log(r) - r**self.beta

    def log_density(self, z):
        return -np.linalg.norm(np.atleast_2d(z), axis=1) ** self.beta

    def exp_tail_finite(self, gamma_exp: float) -> bool:
        # exp(Gamma r^2 - r^beta) is integrable iff beta > 2, or beta = 2 with Gamma < 1
        return self.beta > 2.0 or gamma_exp < 1.0

    def support_distance(self, c):
        return math.inf


@dataclass(frozen=True)
class GaussTemperedStable(LevyMeasure):
    """Gauss-tempered alpha-stable measure along finitely many weighted unit directions."""

    alpha: float
    gamma: float
    directions: tuple[tuple[float, ...], ...] = ((1.0,), (-1.0,))
    weights: tuple[float, ...] = (0.5, 0.5)
    cutoff: float = 0.0

    kind = "gauss-tempered-stable"

    def __post_init__(self):
        if not 0 < self.alpha < 2:
            raise ConfigurationError("alpha must lie in (0, 2)")
        if not self.gamma > 0:
            raise ConfigurationError("gamma must be positive")
        if len(self.directions) != len(self.weights) or not self.directions:
            raise ConfigurationError("directions and weights must be non-empty and of equal length")
        dims = {len(v) for v in self.directions}
        if len(dims) != 1:
            raise ConfigurationError("all directions must have the same dimension")
        for v in self.directions:
            if abs(math.hypot(*v) - 1.0) > 1e-12:
                raise ConfigurationError(f"direction {v} is not a unit vector")
        if any(w <= 0 for w in self.weights):
            raise ConfigurationError("direction weights must be positive")
        if self.cutoff < 0:
            raise ConfigurationError("cutoff must be nonnegative")

    @property
    def dim(self) -> int:  # type: ignore[override]
        return len(self.directions[0])

    @property
    def has_pole(self) -> bool:
        return True

    @property
    def direction_weight(self) -> float:
        """``int |v|^alpha R(dv)``; the directions are unit vectors so this is the total weight."""
        return float(sum(self.weights))

    def radial_profile(self, r):
        """Radial factor ``exp(-gamma r^2/2) / r^(alpha+1)`` without direction weights."""
        r = np.asarray(r, dtype=float)
        return np.exp(-0.5 * self.gamma * r * r) / r ** (self.alpha + 1)

    def _components(self):
        return [_Component(np.array(v, dtype=float), 0.0, math.inf) for v in self.directions]

    def _log_radial(self, k, r):
        with np.errstate(divide="ignore"):
            return math.log(self.weights[k]) - 0.5 * self.gamma * r * r - (self.alpha + 1) * np.log(r)

    def log_density(self, z):
        if self.dim != 1:
            raise DomainError(
                "a Gauss-tempered measure on finitely many rays has no Lebesgue density for d >= 2"
            )
        z = np.atleast_2d(z)[:, 0]
        w_pos = sum(w for v, w in zip(self.directions, self.weights) if v[0] > 0)
        w_neg = sum(w for v, w in zip(self.directions, self.weights) if v[0] < 0)
        w = np.where(z > 0, w_pos, w_neg)
        r = np.abs(z)
        with np.errstate(divide="ignore"):
            return np.log(w) - 0.5 * self.gamma * r * r - (self.alpha + 1) * np.log(r)

    def support_distance(self, c):
        if self.dim != 1:
            return 0.0
        has_pos = any(v[0] > 0 for v in self.directions)
        has_neg = any(v[0] < 0 for v in self.directions)
        if has_pos and has_neg:
            return math.inf
        x = float(np.asarray(c).ravel()[0])
        return max(x, 0.0) if has_pos else max(-x, 0.0)

    def exp_tail_finite(self, gamma_exp: float) -> bool:
        return gamma_exp < 0.5 * self.gamma

    def second_moment_bound(self, r: float) -> float:
        """Closed-form upper bound ``r^(2-alpha) W / (2-alpha)`` obtained by dropping the tempering."""
        return r ** (2 - self.alpha) * self.direction_weight / (2 - self.alpha)


@dataclass(frozen=True)
class CompactSupport(LevyMeasure):
    """Bounded density on the closed ball of radius ``radius`` around ``center``.

    ``density`` is either a constant or a callable; in d = 1 it receives ``z``, in
    higher dimension it receives ``|z|`` (radial density, ``center`` must be 0).
    """

    radius: float
    density_value: float | Callable = 1.0
    center: float = 0.0
    dim: int = 1

    kind = "compact-support"

    @property
    def cutoff(self) -> float:  # type: ignore[override]
        return 0.0

    def __post_init__(self):
        if not self.radius > 0:
            raise ConfigurationError("support radius must be positive")
        if self.dim > 1 and self.center != 0.0:
            raise ConfigurationError("shifted supports are only available in d = 1")
        if not callable(self.density_value) and not self.density_value > 0:
            raise ConfigurationError("constant density must be positive")

    def _f(self, x):
        x = np.asarray(x, dtype=float)
        if callable(self.density_value):
            return np.asarray(self.density_value(x), dtype=float)
        return np.full_like(x, float(self.density_value))

    def _components(self):
        if self.dim == 1:
            c, R = self.center, self.radius
            comps = []
            if c + R > 0:
                comps.append(_Component(np.array([1.0]), max(0.0, c - R), c + R))
            if R - c > 0:
                comps.append(_Component(np.array([-1.0]), max(0.0, -c - R), R - c))
            return comps
        return [_Component(None, 0.0, self.radius)]

    def _log_radial(self, k, r):
        comp = self._components()[k]
        inside = (r >= comp.lo) & (r <= comp.hi)
        with np.errstate(divide="ignore"):
            if self.dim == 1:
                val = np.log(self._f(r * comp.direction[0]))
            else:
                val = math.log(sphere_area(self.dim)) + (self.dim - 1) * np.log(r) + np.log(self._f(r))
        return np.where(inside, val, -np.inf)

    def log_density(self, z):
        z = np.atleast_2d(z)
        dist = np.linalg.norm(z - self.center, axis=1)
        arg = z[:, 0] if self.dim == 1 else np.linalg.norm(z, axis=1)
        with np.errstate(divide="ignore"):
            return np.where(dist <= self.radius, np.log(self._f(arg)), -np.inf)

    def support_distance(self, c):
        c = np.asarray(c, dtype=float).ravel()
        return max(self.radius - float(np.linalg.norm(c - self.center)), 0.0)

    def exp_tail_finite(self, gamma_exp: float) -> bool:
        return True


# ---------------------------------------------------------------------------
# mark-space partition for grid controls


@dataclass(frozen=True)
class MarkPartition:
    """Radial log-bins times direction cells; marks outside the bins form the tail cell.

    Direction cells are the Voronoi cells of ``directions`` on the unit sphere.
    Cell index of a mark is ``direction_index * n_radial + radial_index``.
    """

    radial_edges: tuple[float, ...]
    directions: tuple[tuple[float, ...], ...]

    @property
    def n_radial(self) -> int:
        return len(self.radial_edges) - 1

    @property
    def n_cells(self) -> int:
        return self.n_radial * len(self.directions)

    @property
    def dim(self) -> int:
        return len(self.directions[0])

    def cell_index(self, z) -> np.ndarray:
        z = np.atleast_2d(np.asarray(z, dtype=float))
        r = np.linalg.norm(z, axis=1)
        edges = np.asarray(self.radial_edges)
        i = np.searchsorted(edges, r, side="left") - 1
        valid = (r > edges[0]) & (r <= edges[-1])
        dirs = np.asarray(self.directions, dtype=float)
        j = np.argmax(z @ dirs.T, axis=1)
        return np.where(valid, j * self.n_radial + np.clip(i, 0, self.n_radial - 1), -1)

    @classmethod
    def default(cls, measure: LevyMeasure, n_radial: int = 16, n_sectors: int = 8) -> "MarkPartition":
        comps = measure._components()
        upper = max(measure._radial_upper(k) for k in range(len(comps)))
        lower = measure.cutoff
        if lower < upper / 100:
            edges = np.concatenate([[lower], np.geomspace(upper / 100, upper, n_radial)])
        else:
            edges = np.geomspace(lower, upper, n_radial + 1)
        if all(c.direction is not None for c in comps):
            dirs = []
            for c in comps:
                t = tuple(float(v) for v in c.direction)
                if t not in dirs:
                    dirs.append(t)
        elif measure.dim == 2:
            ang = (np.arange(n_sectors) + 0.5) * 2 * np.pi / n_sectors
            dirs = [(float(np.cos(a)), float(np.sin(a))) for a in ang]
        else:
            raise NotImplementedError("isotropic mark partitions are implemented for d <= 2")
        return cls(tuple(float(e) for e in edges), tuple(dirs))


def _sector_moments(directions: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Angular fraction and mean unit vector (times fraction) of each planar Voronoi sector."""
    ang = np.arctan2(directions[:, 1], directions[:, 0])
    order = np.argsort(ang)
    sa = ang[order]
    nxt = np.roll(sa, -1)
    nxt[-1] += 2 * np.pi
    upper = 0.5 * (sa + nxt)
    lower = np.roll(upper, 1)
    lower[0] -= 2 * np.pi
    frac = np.empty(len(ang))
    vec = np.empty((len(ang), 2))
    frac[order] = (upper - lower) / (2 * np.pi)
    vec[order, 0] = (np.sin(upper) - np.sin(lower)) / (2 * np.pi)
    vec[order, 1] = -(np.cos(upper) - np.cos(lower)) / (2 * np.pi)
    return frac, vec


_BIN_CACHE: dict = {}


def _bin_moments_cached(measure: LevyMeasure, partition: MarkPartition) -> BinMoments:
    key = (measure, partition)
    try:
        return _BIN_CACHE[key]
    except (KeyError, TypeError):
        pass
    dirs = np.asarray(partition.directions, dtype=float)
    if dirs.shape[1] != measure.dim:
        raise ConfigurationError("partition and measure dimensions differ")
    n_rad = partition.n_radial
    edges = partition.radial_edges
    mass = np.zeros(partition.n_cells)
    first = np.zeros((partition.n_cells, measure.dim))
    second = np.zeros(partition.n_cells)
    absf = np.zeros(partition.n_cells)
    for k, comp in enumerate(measure._components()):
        radial = np.array(
            [
                [measure.radial_integral(k, p, max(edges[i], measure.cutoff), edges[i + 1]) for p in (0.0, 1.0, 2.0)]
                for i in range(n_rad)
            ]
        )
        if comp.direction is not None:
            j = int(np.argmax(dirs @ comp.direction))
            sl = slice(j * n_rad, (j + 1) * n_rad)
            mass[sl] += radial[:, 0]
            first[sl] += radial[:, 1, None] * comp.direction[None, :]
            second[sl] += radial[:, 2]
            absf[sl] += radial[:, 1]
        else:
            if measure.dim != 2:
                raise NotImplementedError("isotropic bin moments are implemented for d <= 2")
            frac, vec = _sector_moments(dirs)
            for j in range(len(dirs)):
                sl = slice(j * n_rad, (j + 1) * n_rad)
                mass[sl] += frac[j] * radial[:, 0]
                first[sl] += radial[:, 1, None] * vec[j][None, :]
                second[sl] += frac[j] * radial[:, 2]
                absf[sl] += frac[j] * radial[:, 1]
    out = BinMoments(mass, first, second, absf)
    try:
        _BIN_CACHE[key] = out
    except TypeError:
        pass
    return out
