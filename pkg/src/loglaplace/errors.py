"""Exception types raised across the package."""

from __future__ import annotations


class LogLaplaceError(Exception):
    """Base class for all package errors."""


class MissingDerivative(LogLaplaceError):
    pass


class ValidationFailed(LogLaplaceError):
    """A coefficient bound was violated on the probe grid.

    ``report`` holds the full :class:`~loglaplace.model.BCReport`.
    """

    def __init__(self, message: str, report=None):
        super().__init__(message)
        self.report = report


class BadGrid(LogLaplaceError):
    pass


class GridMismatch(LogLaplaceError):
    pass


class BandwidthTooSmall(LogLaplaceError):
    pass


class SingularSystem(LogLaplaceError):
    pass


class BoundaryLeak(LogLaplaceError):
    pass


class CFLViolation(LogLaplaceError):
    pass


class TrajectoryMismatch(LogLaplaceError):
    pass


class EmptyMeasure(LogLaplaceError):
    pass


class EmptyInitial(LogLaplaceError):
    pass


class ConfigError(LogLaplaceError):
    pass
