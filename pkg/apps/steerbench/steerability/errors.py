"""
Exception types raised by the steerability harness.

Each class maps to one failure kind of the pipeline and subclasses the closest builtin,
so callers that only know about ValueError / RuntimeError keep working.
"""

from typing import List, Optional


class InvalidArgumentError(ValueError):
    """An argument violates an operation's precondition."""


class UndefinedMetricError(ValueError):
    """A metric has no value for the given text (e.g. zero words or sentences)."""


class BelowValidityFloorError(UndefinedMetricError):
    """The text is too short for the metric to be considered valid."""


class MetricError(ValueError):
    """A goal-dimension metric failed while mapping a text into goal-space."""

    def __init__(self, dimension: str, cause: Exception):
        super().__init__(f"Metric for dimension '{dimension}' failed: {cause}")
        self.dimension = dimension
        self.cause = cause


class DegenerateDimensionError(ValueError):
    """All seed values of a dimension are equal, so it cannot be normalized."""


class UnknownDimensionError(KeyError):
    """A goal dimension is not registered in the goal-space config."""


class OutOfRangeError(ValueError):
    """A value lies outside the range an operation accepts."""


class InsufficientSeedsError(ValueError):
    """Not enough seed texts to satisfy a sampling request."""


class ConvergenceError(RuntimeError):
    """The density-ratio classifier did not converge."""

    def __init__(self, message: str, loss_trace: Optional[List[float]] = None):
        super().__init__(message)
        self.loss_trace = loss_trace or []


class InvalidStrategyError(ValueError):
    """A prompt strategy is inconsistent (e.g. negative prompt without named dimensions)."""


class TransportFailureError(RuntimeError):
    """An endpoint kept failing at the transport level after all retries."""

    def __init__(self, message: str, retries: int = 0, status_code: Optional[int] = None):
        super().__init__(message)
        self.retries = retries
        self.status_code = status_code


class CredentialError(EnvironmentError):
    """Credentials are missing or were rejected by the endpoint."""


class ExtractionFailureError(ValueError):
    """A rewrite could not be extracted from a raw model response."""


class NoValidCandidateError(RuntimeError):
    """None of the best-of-N attempts produced a usable rewrite."""


class ZeroRequestError(ValueError):
    """The target equals the source, so the requested movement is zero."""


class UndefinedTauError(ValueError):
    """Kendall's tau is undefined because one side is entirely tied."""


class EmptyInputError(ValueError):
    """An aggregation received no usable values."""


class InsufficientStrataError(ValueError):
    """A stratified comparison has an empty group."""


class DegeneratePairsError(ValueError):
    """All paired differences are zero."""
