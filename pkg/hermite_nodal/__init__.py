"""Nodal-set density of Gaussian random Hermite eigenfunctions."""

from .config import __version__
from .errors import (AccuracyError, CapacityError, DegenerateKernel, DegeneratePhase,
                     DomainError, HermiteNodalError, RangeError)
from .hermite_core import ModelParams

__all__ = [
    "__version__",
    "AccuracyError",
    "CapacityError",
    "DegenerateKernel",
    "DegeneratePhase",
    "DomainError",
    "HermiteNodalError",
    "ModelParams",
    "RangeError",
]
