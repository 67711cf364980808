"""Exception types shared across the package."""


class HartreeboxError(Exception):
    """Base class for all package errors."""


class InvalidParameterError(HartreeboxError, ValueError):
    """A parameter is outside its documented domain."""


class GridMismatchError(HartreeboxError, ValueError):
    """Two fields live on incompatible grids."""


class ConvergenceError(HartreeboxError, RuntimeError):
    """An iterative estimator failed to reach its tolerance.

    Carries the best estimate so far so callers can inspect it.
    """

    def __init__(self, message, best_estimate=None, residual=None, iterations=None):
        super().__init__(message)
        self.best_estimate = best_estimate
        self.residual = residual
        self.iterations = iterations


class ToleranceNotMetError(HartreeboxError, RuntimeError):
    """A truncated expansion cannot reach the requested tolerance."""

    def __init__(self, message, achieved=None, requested=None):
        super().__init__(message)
        self.achieved = achieved
        self.requested = requested


class CoverageError(HartreeboxError, ValueError):
    """A time-indexed series does not cover the requested interval."""


class BlowUpError(HartreeboxError, RuntimeError):
    """The nonlinear evolution tripped the norm-drift detector."""

    def __init__(self, message, time=None, drift=None):
        super().__init__(message)
        self.time = time
        self.drift = drift


class SnapshotFormatError(HartreeboxError, ValueError):
    """A binary snapshot file is malformed."""
