"""Singular expansions, coefficient extraction and time-domain kernels for the
nonstationary Stokes system in a circular cone."""

from .errors import ConeStokesError, DataError, DomainError, NumericError, ResonanceError
from .geometry import ConeSpec

__version__ = "0.1.0"

__all__ = ["ConeSpec", "ConeStokesError", "DataError", "DomainError", "NumericError", "ResonanceError",
           "__version__"]
