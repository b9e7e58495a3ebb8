"""
Exception hierarchy and the error-logging decorator used by public entry points.

Every error knows the CLI exit code it maps to.
"""

import logging
from functools import wraps

logger = logging.getLogger(__name__)


class HermiteNodalError(Exception):
    exit_code = 1


class DomainError(HermiteNodalError, ValueError):
    """Input outside the region or parameter range an operation supports."""
    exit_code = 2


class DegenerateKernel(DomainError):
    """Pi(x,x) too small for the Omega matrix to carry information."""


class DegeneratePhase(DomainError):
    """Stationary phase requested at a degenerate critical point."""


class AccuracyError(HermiteNodalError):
    """A requested accuracy cannot be certified. `bound` holds the offending estimate."""
    exit_code = 3

    def __init__(self, message: str, bound: float | None = None):
        super().__init__(message)
        self.bound = bound


class RangeError(HermiteNodalError, OverflowError):
    exit_code = 3


class CapacityError(HermiteNodalError):
    exit_code = 4


def numerics_error_handler(func):
    """Log a package error once, at the innermost decorated function, and re-raise."""
    @wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except HermiteNodalError as e:
            if not getattr(e, "logged", False):
                logger.error("Error in %s: %s", func.__name__, e)
                e.logged = True
            raise
    return wrapper
