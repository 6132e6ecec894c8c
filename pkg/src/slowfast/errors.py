"""Exception types raised across the package."""
from __future__ import annotations


class SlowFastError(Exception):
    """Base class for every package-specific failure."""


class NumericalFailure(SlowFastError):
    """A computation could not reach its stated tolerance."""


class StepSizeUnderflow(NumericalFailure):
    pass


class NoEquilibriumInBracket(NumericalFailure):
    pass


class DegenerateSpectrum(NumericalFailure):
    pass


class NoSignChange(NumericalFailure):
    pass


class NotCaptured(NumericalFailure):
    pass


class InsufficientHits(NumericalFailure):
    pass


class NoCrossing(NumericalFailure):
    pass


class ProjectionDegenerate(NumericalFailure):
    pass


class NewtonDiverged(NumericalFailure):
    pass


class JacobianSingular(NumericalFailure):
    pass


class NoIntersection(NumericalFailure):
    pass


class CorrectionFailed(NumericalFailure):
    def __init__(self, step: int, message: str = ""):
        self.step = step
        super().__init__(message or f"correction failed at step {step}")


class PredicateNotBracketed(SlowFastError):
    """Bisection endpoints do not straddle the predicate change."""


class ConfigError(SlowFastError):
    def __init__(self, message: str, line: int | None = None, key: str | None = None):
        self.line = line
        self.key = key
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"key '{key}'")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)


class EmptyDataset(SlowFastError):
    pass
