"""Shared error taxonomy for the toolkit.

Every failure mode raised by the library maps to one of the classes below.
CLI exit codes: config problems -> 3, solver/check machinery errors -> 4,
checks that ran but failed -> 2.
"""

from __future__ import annotations


class SlqError(Exception):
    """Base class for all toolkit errors."""


class InvalidArgumentError(SlqError, ValueError):
    """A caller-supplied argument violates a documented precondition."""


class FiniteEscapeError(SlqError):
    """A backward Riccati integration blew up before reaching the start time."""

    def __init__(self, message: str, time: float | None = None):
        super().__init__(message)
        self.time = time


class RiccatiSingularError(SlqError):
    """The control-weight operator lost definiteness / range solvability."""

    def __init__(self, message: str, time: float | None = None):
        super().__init__(message)
        self.time = time


class RegressionSingularError(SlqError):
    """A cross-sectional regression design matrix was rank deficient."""

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message)
        self.step = step


class DriverSingularError(SlqError):
    """The regression solver's control weight fell below the clamp floor."""

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message)
        self.step = step


class SynthesisInfeasibleError(SlqError):
    """Feedback synthesis failed a pointwise solvability condition.

    Attributes
    ----------
    reason : str
        Which condition failed: "range" or "psd".
    offenders : list[tuple[float, int]]
        Up to 100 offending (time, path_id) pairs.
    total_offenders : int
        Total number of offending (time, path) points found.
    """

    def __init__(self, message: str, reason: str, offenders, total_offenders: int):
        super().__init__(message)
        self.reason = reason
        self.offenders = list(offenders)[:100]
        self.total_offenders = int(total_offenders)


class ConfigError(SlqError):
    """An experiment configuration is malformed; names the offending field."""

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message)
        self.field = field
