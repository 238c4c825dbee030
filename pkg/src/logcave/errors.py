"""Exception types raised across the package."""


class LogcaveError(Exception):
    """Base class for all package errors."""


class DegenerateSample(LogcaveError, ValueError):
    """Fewer than two distinct observations (or grid points)."""


class DomainMismatch(LogcaveError, ValueError):
    """A fitted function does not live on the domain the check requires."""


class ModeInfeasible(LogcaveError, ValueError):
    """A function violates the mode constraint it is being checked against."""


class NonConvergence(LogcaveError, RuntimeError):
    """Solver stopped before reaching the requested certificate tolerance.

    The best iterate found is attached as ``fit`` so callers can still
    inspect it.
    """

    def __init__(self, message, fit=None):
        super().__init__(message)
        self.fit = fit


class TooLarge(LogcaveError, ValueError):
    """Instance exceeds the size the exhaustive oracle accepts."""


class Inconsistent(LogcaveError, RuntimeError):
    """The oracle's best candidate failed its own certificate."""
