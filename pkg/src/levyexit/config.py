"""Experiment configuration: ``key = value`` lines with dotted sections.

Every key must be known and applicable to the selected kinds; anything else is an
error naming the key and its line, so typos never pass silently.

Example::

    system.drift = linear
    system.g = constant
    system.domain = interval
    system.domain.lo = -1
    system.domain.hi = 1
    measure.kind = exponential
    run.eps = 0.4, 0.3, 0.2, 0.15
    run.n = 2000
    run.seed = 7
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dynamics import (
    AffineClampedCoefficient,
    Ball,
    Box,
    ConstantCoefficient,
    PolynomialDrift,
    SystemSpec,
    WholeSpace,
)
from .errors import ConfigParseError, ConfigurationError
from .measures import CompactSupport, ExponentialLight, GaussTemperedStable, LevyMeasure
from .quasipotential import QPOptions


def _floats(s: str) -> tuple[float, ...]:
    return tuple(float(v) for v in s.split(",") if v.strip())


def _vectors(s: str) -> tuple[tuple[float, ...], ...]:
    return tuple(_floats(part) for part in s.split(";"))


def _int_list(s: str) -> tuple[int, ...]:
    return tuple(int(v) for v in s.split(",") if v.strip())


def _cap(s: str):
    return s.strip() if s.strip() == "auto" else float(s)


# key -> (parser, applicable-when) ; applicable-when is (selector key, allowed values) or None
_KEYS: dict[str, tuple] = {
    "system.drift": (str, None),
    "system.drift.rate": (float, ("system.drift", {"linear"})),
    "system.drift.coeffs": (_floats, ("system.drift", {"polynomial"})),
    "system.g": (str, None),
    "system.g.value": (float, ("system.g", {"constant"})),
    "system.g.offset": (float, ("system.g", {"affine"})),
    "system.g.slope": (_floats, ("system.g", {"affine"})),
    "system.g.floor": (float, ("system.g", {"affine"})),
    "system.domain": (str, None),
    "system.domain.lo": (_floats, ("system.domain", {"interval", "box"})),
    "system.domain.hi": (_floats, ("system.domain", {"interval", "box"})),
    "system.domain.radius": (float, ("system.domain", {"ball"})),
    "system.domain.center": (_floats, ("system.domain", {"ball"})),
    "system.domain.dim": (int, ("system.domain", {"whole"})),
    "measure.kind": (str, None),
    "measure.beta": (float, ("measure.kind", {"exponential"})),
    "measure.dim": (int, ("measure.kind", {"exponential", "compact"})),
    "measure.cutoff": (float, ("measure.kind", {"exponential", "gauss-tempered-stable"})),
    "measure.alpha": (float, ("measure.kind", {"gauss-tempered-stable"})),
    "measure.gamma": (float, ("measure.kind", {"gauss-tempered-stable"})),
    "measure.directions": (_vectors, ("measure.kind", {"gauss-tempered-stable"})),
    "measure.weights": (_floats, ("measure.kind", {"gauss-tempered-stable"})),
    "measure.radius": (float, ("measure.kind", {"compact"})),
    "measure.density": (float, ("measure.kind", {"compact"})),
    "measure.center": (float, ("measure.kind", {"compact"})),
    "run.eps": (_floats, None),
    "run.n": (int, None),
    "run.seed": (int, None),
    "run.workers": (int, None),
    "run.dt": (float, None),
    "run.t_cap": (_cap, None),
    "run.t_cap.factor": (float, None),
    "run.horizon": (float, None),
    "run.x": (_floats, None),
    "qp.family": (str, None),
    "qp.restarts": (int, None),
    "qp.knots": (_int_list, None),
    "qp.horizons": (_floats, None),
    "qp.golden_steps": (int, None),
    "qp.value_tol": (float, None),
    "qp.max_evals": (int, None),
    "qp.mesh_points": (int, None),
    "qp.mesh_rounds": (int, None),
    "kramers.window_delta": (float, None),
    "kramers.location_delta": (float, None),
    "kramers.qp_report": (str, None),
    "cycle.rho": (float, None),
    "cycle.rho_prime": (float, None),
    "is.horizon": (float, None),
    "is.eps": (float, None),
    "sample.n": (int, None),
}

_SELECTORS = {
    "system.drift": {"linear", "cubic", "polynomial"},
    "system.g": {"constant", "affine"},
    "system.domain": {"interval", "box", "ball", "whole"},
    "measure.kind": {"exponential", "gauss-tempered-stable", "compact"},
    "qp.family": {"ball", "tilt", "best"},
}

_DEFAULTS = {"system.drift": "linear", "system.g": "constant", "system.domain": "interval"}


@dataclass
class ExperimentConfig:
    """Parsed configuration; ``raw`` keeps the original strings for lossless output."""

    raw: dict[str, str]
    values: dict[str, object]
    lines: dict[str, int] = field(default_factory=dict)

    # -- parsing ----------------------------------------------------------

    @classmethod
    def parse(cls, text: str) -> "ExperimentConfig":
        raw: dict[str, str] = {}
        lines: dict[str, int] = {}
        for lineno, line in enumerate(text.splitlines(), start=1):
            s = line.split("#", 1)[0].strip()
            if not s:
                continue
            if "=" not in s:
                raise ConfigParseError("expected 'key = value'", line=lineno)
            key, _, value = s.partition("=")
            key, value = key.strip(), value.strip()
            if key not in _KEYS:
                raise ConfigParseError(f"unknown key {key!r}", key=key, line=lineno)
            if key in raw:
                raise ConfigParseError(f"duplicate key {key!r}", key=key, line=lineno)
            raw[key] = value
            lines[key] = lineno
        values: dict[str, object] = {}
        for key, value in raw.items():
            parser, cond = _KEYS[key]
            if key in _SELECTORS and value not in _SELECTORS[key]:
                raise ConfigParseError(
                    f"{key} must be one of {sorted(_SELECTORS[key])}, got {value!r}",
                    key=key, line=lines[key])
            if cond is not None:
                sel, allowed = cond
                chosen = raw.get(sel, _DEFAULTS.get(sel))
                if chosen not in allowed:
                    raise ConfigParseError(
                        f"key {key!r} does not apply to {sel} = {chosen}",
                        key=key, line=lines[key])
            try:
                values[key] = parser(value)
            except ValueError as exc:
                raise ConfigParseError(f"bad value for {key!r}: {exc}",
                                       key=key, line=lines[key]) from None
        return cls(raw, values, lines)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.parse(fh.read())

    def to_text(self) -> str:
        return "".join(f"{k} = {v}\n" for k, v in self.raw.items())

    def get(self, key: str, default=None):
        return self.values.get(key, default)

    def require(self, key: str):
        if key not in self.values:
            raise ConfigParseError(f"missing required key {key!r}", key=key)
        return self.values[key]

    def _wrap(self, key, fn):
        try:
            return fn()
        except ConfigParseError:
            raise
        except ConfigurationError as exc:
            raise ConfigParseError(f"{key}: {exc}", key=key, line=self.lines.get(key)) from None

    # -- builders ---------------------------------------------------------

    def measure(self) -> LevyMeasure:
        kind = self.require("measure.kind")

        def build():
            if kind == "exponential":
                return ExponentialLight(self.get("measure.beta", 2.0), self.get("measure.dim", 1),
                                        self.get("measure.cutoff", 0.0))
            if kind == "gauss-tempered-stable":
                kw = {}
                if "measure.directions" in self.values:
                    kw["directions"] = self.values["measure.directions"]
                if "measure.weights" in self.values:
                    kw["weights"] = self.values["measure.weights"]
                return GaussTemperedStable(self.require("measure.alpha"), self.require("measure.gamma"),
                                           cutoff=self.get("measure.cutoff", 0.0), **kw)
            return CompactSupport(self.require("measure.radius"), self.get("measure.density", 1.0),
                                  self.get("measure.center", 0.0), self.get("measure.dim", 1))

        return self._wrap("measure.kind", build)

    def system(self) -> SystemSpec:
        def build():
            drift = self.get("system.drift", "linear")
            if drift == "linear":
                b = PolynomialDrift.linear(self.get("system.drift.rate", 1.0))
            elif drift == "cubic":
                b = PolynomialDrift.cubic()
            else:
                b = PolynomialDrift(self.require("system.drift.coeffs"))
            if self.get("system.g", "constant") == "constant":
                g = ConstantCoefficient(self.get("system.g.value", 1.0))
            else:
                g = AffineClampedCoefficient(self.require("system.g.offset"), self.require("system.g.slope"),
                                             self.require("system.g.floor"))
            dom = self.get("system.domain", "interval")
            if dom in ("interval", "box"):
                d = Box(self.get("system.domain.lo", (-1.0,)), self.get("system.domain.hi", (1.0,)))
            elif dom == "ball":
                r = self.require("system.domain.radius")
                c = self.get("system.domain.center")
                d = Ball(r, c) if c is not None else Ball(r)
            else:
                d = WholeSpace(self.get("system.domain.dim", 1))
            return SystemSpec(b, g, d)

        return self._wrap("system.domain", build)

    def qp_options(self) -> QPOptions:
        kw = {}
        for key, name in [("qp.family", "family"), ("qp.restarts", "restarts"), ("qp.knots", "knot_schedule"),
                          ("qp.horizons", "horizons"), ("qp.golden_steps", "golden_steps"),
                          ("qp.value_tol", "value_tol"), ("qp.max_evals", "max_evals"),
                          ("qp.mesh_points", "mesh_points"), ("qp.mesh_rounds", "mesh_rounds")]:
            if key in self.values:
                kw[name] = self.values[key]
        kw["seed"] = self.seed
        kw["workers"] = self.workers
        return self._wrap("qp.family", lambda: QPOptions(**kw))

    @property
    def seed(self) -> int:
        return int(self.get("run.seed", 0))

    @property
    def workers(self) -> int:
        return int(self.get("run.workers", 1))

    def start(self, dim: int) -> np.ndarray:
        x = np.array(self.get("run.x", (0.0,) * dim), dtype=float)
        if x.shape != (dim,):
            raise ConfigParseError("run.x has the wrong dimension", key="run.x", line=self.lines.get("run.x"))
        return x

    def override(self, **kw) -> "ExperimentConfig":
        """Copy with ``run.*`` values replaced (command-line flags)."""
        raw = dict(self.raw)
        for k, v in kw.items():
            if v is not None:
                raw[f"run.{k}"] = str(v)
        return ExperimentConfig.parse("".join(f"{k} = {v}\n" for k, v in raw.items()))


def t_cap_value(cfg: ExperimentConfig):
    from .exitlab import TCapPolicy

    cap = cfg.get("run.t_cap", "auto")
    if cap == "auto":
        return TCapPolicy(factor=cfg.get("run.t_cap.factor", 20.0))
    if not cap > 0 or not math.isfinite(cap):
        raise ConfigParseError("run.t_cap must be positive and finite", key="run.t_cap")
    return cap
