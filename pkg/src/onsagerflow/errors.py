"""Exception types raised across the package."""

from __future__ import annotations


class OnsagerError(Exception):
    """Base class for all package errors."""


class DomainViolation(OnsagerError, ValueError):
    """A state left the domain of the energy or metric (e.g. log of u <= 0)."""


class NonNeutralSource(OnsagerError, ValueError):
    """Periodic Poisson source does not integrate to zero."""


class NoConvergence(OnsagerError, RuntimeError):
    """An iterative solver hit its iteration cap.

    The last iterate and residual are kept for post-mortem inspection.
    """

    def __init__(self, message, *, iterations=None, residual=None, point=None):
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual
        self.point = point


class SingularSystem(OnsagerError, RuntimeError):
    """The Newton saddle-point matrix could not be factorized."""


class ShiftViolation(OnsagerError, ValueError):
    """AEPG met L + c <= 0, so sqrt(L + c) is undefined."""


class ParseError(OnsagerError, ValueError):
    """Malformed run configuration (bad JSON, unknown or mistyped key)."""

    def __init__(self, message, path=""):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


class ValidationError(OnsagerError, ValueError):
    """Run configuration violates one or more invariants."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class UnknownProfile(OnsagerError, KeyError):
    """Requested initial-condition or field profile does not exist."""
