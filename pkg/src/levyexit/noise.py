"""Accelerated Poisson random measures, tilted versions and likelihood ratios.

Jumps of ``N^{1/eps}`` restricted to ``{|z| > cutoff}`` arrive at rate ``m_eff / eps`` with
marks drawn from the normalised measure.  Tilted measures ``N^{g/eps}`` are realised by
thinning a dominating proposal; for piecewise-constant grid tilts the dominating
intensity is the tilted one itself, cell by cell, so every proposal is accepted.

All generation goes through :class:`JumpStream`, which produces jumps in fixed-size
chunks of exponential gaps.  A finite horizon simulation and an open-ended first exit
simulation with the same generator therefore see exactly the same jumps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .errors import ConfigurationError, DegenerateWeight, JumpCapExceeded
from .measures import LevyMeasure

CHUNK = 1024
DEFAULT_MAX_JUMPS = 20_000_000


@dataclass(frozen=True)
class NoiseParams:
    """Noise intensity ``epsilon``, jump measure and horizon ``T``."""

    epsilon: float
    measure: LevyMeasure
    horizon: float

    def __post_init__(self):
        if not 0.0 < self.epsilon <= 1.0:
            raise ConfigurationError(f"epsilon must lie in (0, 1], got {self.epsilon}")
        if not self.horizon >= 0.0 or not math.isfinite(self.horizon):
            raise ConfigurationError(f"horizon must be finite and nonnegative, got {self.horizon}")

    @property
    def rate(self) -> float:
        """Arrival rate ``m_eff / epsilon`` of the untilted jumps."""
        return self.measure.effective_mass() / self.epsilon


@dataclass(frozen=True)
class JumpRecord:
    time: float
    mark: np.ndarray


class JumpList:
    """Jump times (strictly increasing) and marks of one realisation."""

    def __init__(self, times, marks, log_g=None):
        self.times = np.ascontiguousarray(times, dtype=float)
        marks = np.asarray(marks, dtype=float)
        if marks.ndim == 1:
            marks = marks.reshape(len(self.times), -1) if marks.size else marks.reshape(0, 1)
        self.marks = np.ascontiguousarray(marks)
        self.log_g = None if log_g is None else np.ascontiguousarray(log_g, dtype=float)
        if self.marks.shape[0] != self.times.shape[0]:
            raise ValueError("times and marks differ in length")

    @classmethod
    def empty(cls, dim: int) -> "JumpList":
        return cls(np.empty(0), np.empty((0, dim)))

    @property
    def dim(self) -> int:
        return self.marks.shape[1]

    def __len__(self) -> int:
        return self.times.shape[0]

    def __iter__(self) -> Iterator[JumpRecord]:
        for t, z in zip(self.times, self.marks):
            yield JumpRecord(float(t), z.copy())

    def __eq__(self, other) -> bool:
        if not isinstance(other, JumpList):
            return NotImplemented
        return np.array_equal(self.times, other.times) and np.array_equal(self.marks, other.marks)

    def __repr__(self) -> str:
        return f"JumpList(n={len(self)}, dim={self.dim})"


def _is_identity(control) -> bool:
    return control is None or bool(getattr(control, "is_identity", False))


class JumpStream:
    """Infinite stream of jumps of ``N^{g/eps}`` in chunks.

    The control acts on ``[0, control.horizon)``; afterwards the intensity is the
    untilted one.  ``next_chunk`` returns ``(times, marks, log_g)`` where ``log_g`` is
    ``ln g`` at each returned jump (zeros past the control horizon or untilted).
    """

    def __init__(self, measure: LevyMeasure, epsilon: float, rng: np.random.Generator,
                 control=None, chunk: int = CHUNK, method: str = "auto"):
        if method not in ("auto", "thinning"):
            raise ConfigurationError(f"unknown tilting method {method!r}")
        m_eff = measure.effective_mass()
        if not m_eff > 0:
            raise ConfigurationError("the jump measure has zero effective mass")
        self.measure = measure
        self.epsilon = epsilon
        self.rng = rng
        self.rate = m_eff / epsilon
        self.chunk = chunk
        self.t = 0.0
        self.control = None if _is_identity(control) else control
        self.method = method
        if self.control is not None:
            self.horizon = float(self.control.horizon)
            self.exact = method == "auto" and hasattr(self.control, "sample_tilted")
            if not self.exact:
                self.g_max = float(self.control.upper_bound(measure))
                if not math.isfinite(self.g_max) or self.g_max <= 0:
                    raise ConfigurationError("thinning needs a finite positive bound on the control")
        else:
            self.horizon = 0.0
            self.exact = False

    @property
    def tilted_phase(self) -> bool:
        return self.control is not None and self.t < self.horizon

    def next_chunk(self):
        if self.tilted_phase:
            if self.exact:
                times, marks, g = self.control.sample_tilted(self.measure, self.epsilon, self.rng)
                self.t = self.horizon
                return times, marks, np.log(g)
            return self._thinned_chunk()
        dim = self.measure.dim
        gaps = self.rng.exponential(1.0 / self.rate, self.chunk)
        times = self.t + np.cumsum(gaps)
        marks = self.measure.sample(self.rng, self.chunk).reshape(self.chunk, dim)
        self.t = float(times[-1])
        return times, np.ascontiguousarray(marks), np.zeros(self.chunk)

    def _thinned_chunk(self):
        n = self.chunk
        gaps = self.rng.exponential(1.0 / (self.g_max * self.rate), n)
        times = self.t + np.cumsum(gaps)
        marks = self.measure.sample(self.rng, n).reshape(n, self.measure.dim)
        u = self.rng.random(n)
        inside = times < self.horizon
        if inside.all():
            self.t = float(times[-1])
        else:
            self.t = self.horizon
            times, marks, u = times[inside], marks[inside], u[inside]
        g = np.asarray(self.control(times, marks, self.measure), dtype=float)
        if np.any(g > self.g_max * (1 + 1e-9)):
            raise ConfigurationError(f"control exceeds its declared bound {self.g_max}")
        keep = u * self.g_max < g
        return times[keep], np.ascontiguousarray(marks[keep]), np.log(g[keep])


def _collect(stream: JumpStream, horizon: float, max_jumps: int) -> JumpList:
    dim = stream.measure.dim
    parts_t, parts_z, parts_l = [], [], []
    total = 0
    if horizon <= 0:
        return JumpList.empty(dim)
    while True:
        last_time = stream.t
        times, marks, log_g = stream.next_chunk()
        keep = times <= horizon
        parts_t.append(times[keep])
        parts_z.append(marks[keep])
        parts_l.append(log_g[keep])
        total += int(keep.sum())
        if total > max_jumps:
            raise JumpCapExceeded(f"more than {max_jumps} jumps on [0, {horizon}]")
        if not keep.all() or (len(times) == 0 and last_time >= horizon) or stream.t > horizon:
            break
    return JumpList(np.concatenate(parts_t), np.concatenate(parts_z).reshape(-1, dim), np.concatenate(parts_l))


def simulate_prm(params: NoiseParams, rng: np.random.Generator, max_jumps: int = DEFAULT_MAX_JUMPS) -> JumpList:
    """Jumps of ``N^{1/eps}`` on ``[0, T]`` (marks above the measure's cutoff)."""
    return _collect(JumpStream(params.measure, params.epsilon, rng), params.horizon, max_jumps)


def simulate_tilted_prm(params: NoiseParams, control, rng: np.random.Generator,
                        method: str = "auto", max_jumps: int = DEFAULT_MAX_JUMPS) -> JumpList:
    """Jumps of ``N^{g/eps}`` on ``[0, T]``; ``g`` is the identity beyond the control horizon.

    ``method='thinning'`` forces plain thinning against ``control.upper_bound``; the
    default uses an exact cell sampler when the control provides one.  An identity
    control consumes the generator exactly like :func:`simulate_prm`.
    """
    stream = JumpStream(params.measure, params.epsilon, rng, control=control, method=method)
    return _collect(stream, params.horizon, max_jumps)


def girsanov_log_weight(params: NoiseParams, control, jumps: JumpList, stop_time: float | None = None) -> float:
    """Log likelihood ratio d(untilted)/d(tilted) of a tilted realisation, stopped at ``T ^ stop_time``.

    ``ln W = -sum_{t_i <= tau} ln g(t_i, z_i) + (1/eps) int_0^tau int (g - 1) dnu ds``.
    """
    if _is_identity(control):
        return 0.0
    tau = params.horizon if stop_time is None else min(params.horizon, stop_time)
    sel = jumps.times <= tau
    if sel.any():
        g = np.asarray(control(jumps.times[sel], jumps.marks[sel], params.measure), dtype=float)
        if np.any(g <= 0):
            raise DegenerateWeight("a realised jump has zero tilted intensity")
        jump_term = -float(np.sum(np.log(g)))
    else:
        jump_term = 0.0
    upper = min(tau, float(control.horizon))
    comp = control.compensator_integral(0.0, upper, params.measure) if upper > 0 else 0.0
    return jump_term + comp / params.epsilon
