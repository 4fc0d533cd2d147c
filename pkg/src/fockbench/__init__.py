"""Truncated Fock-space experiments on derivations of free semicircular algebras."""

from .fock import FockBasis, NcPoly, build_basis, generators
from .numkit import LinOp, spectral_norm

__version__ = "0.1.0"

__all__ = ["FockBasis", "LinOp", "NcPoly", "build_basis", "generators", "spectral_norm", "__version__"]
