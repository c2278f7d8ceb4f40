"""Covariance-orthogonalization pipeline for indirect-discrimination mitigation."""

from .errors import FairbasisError
from .undefined import UNDEFINED, is_undefined

__version__ = "0.1.0"

__all__ = ["FairbasisError", "UNDEFINED", "is_undefined", "__version__"]
