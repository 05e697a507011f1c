"""Exception types shared across the package."""

from __future__ import annotations


class DomainError(ValueError):
    """Argument outside the domain on which a quantity is defined."""


class ConfigError(ValueError):
    """One or more configuration problems, reported together."""

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class SolverError(RuntimeError):
    """The minimizer did not converge. ``best`` holds the last iterate."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class NumericalError(SolverError):
    """Non-finite values appeared during the solve."""


class InvariantViolation(RuntimeError):
    """A computed solution breaks a structural property it must satisfy
    (single void interval, nonnegative contact force, ...)."""

    def __init__(self, message, details=None):
        super().__init__(message)
        self.details = details
