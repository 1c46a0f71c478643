"""Exception hierarchy shared by all modules."""


class LevyExitError(Exception):
    """Base class for every error raised by the package."""


class ConfigurationError(LevyExitError, ValueError):
    """Invalid or inconsistent parameters (bad measure, unbounded control, ...)."""


class DomainError(LevyExitError, ValueError):
    """A point outside the domain of definition of a map, e.g. z = 0 for a jump density."""


class HypothesisViolation(LevyExitError):
    """A standing assumption on drift, coefficient, measure or domain failed a probe."""


class NumericalBlowup(LevyExitError, ArithmeticError):
    """A trajectory or controlled path became non-finite or left every reasonable bound."""


class JumpCapExceeded(LevyExitError):
    """More jumps than the configured guard were realised on a path."""


class SupportViolation(LevyExitError):
    """A steering ball left the support of the jump measure."""


class DegenerateWeight(LevyExitError):
    """A realised jump has zero tilted intensity, so the likelihood ratio is undefined."""


class InfeasibleError(LevyExitError):
    """No admissible certificate could be constructed for a transfer."""


class ConfigParseError(ConfigurationError):
    """Malformed experiment config; carries the offending key and line number."""

    def __init__(self, message: str, key: str | None = None, line: int | None = None):
        where = []
        if key is not None:
            where.append(f"key '{key}'")
        if line is not None:
            where.append(f"line {line}")
        prefix = f"[{', '.join(where)}] " if where else ""
        super().__init__(prefix + message)
        self.key = key
        self.line = line
