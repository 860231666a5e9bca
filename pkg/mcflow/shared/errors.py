"""
Exception hierarchy for mcflow.

Every error raised on purpose by the package derives from MCFlowError so the
command line can map it to an exit code.
"""
from typing import List, Optional


class MCFlowError(Exception):
    """Root of all mcflow errors."""


class DomainError(MCFlowError, ValueError):
    """Parameters outside the domain of an operation."""


class GraphValidityError(DomainError):
    """A height function no longer describes a valid graph over its base."""

    def __init__(self, message: str, time: Optional[float] = None):
        self.time = time
        if time is not None:
            message = f"{message} (first failing time t={time:.6g})"
        super().__init__(message)


class ResolutionError(DomainError):
    """A grid is too coarse for the requested computation."""


class PreconditionError(DomainError):
    """Initial data violates a smallness hypothesis."""


class TruncationError(MCFlowError):
    """A series needs more modes than the evaluator is allowed to use."""


class UnsupportedOrderError(MCFlowError, NotImplementedError):
    """Derivative order not available for this operator or geometry."""


class ConvergenceError(MCFlowError):
    """Picard iteration failed to reach the requested tolerance."""

    def __init__(self, message: str, ratios: Optional[List[float]] = None):
        self.ratios = list(ratios or [])
        super().__init__(message)


class BallExitError(ConvergenceError):
    """An iterate left the ball the fixed point is sought in."""


class ConfigError(MCFlowError):
    """Invalid experiment or global configuration."""


class BoundViolation(MCFlowError):
    """A bound asserted by an experiment does not hold."""


class ArtifactError(MCFlowError):
    """A required output file could not be written."""
