"""Numerical lab for multilinear pseudo-differential operators with S_{0,0} symbols."""

__version__ = "0.1.0"

from .errors import (BudgetError, ConvergenceError, LabError, ParameterError, PreconditionError,
                     QualityWarning, ResolutionError, StructuralError)
from .lattice import GridSpec, LatticeField, forward_transform, inverse_transform
from .norms import ExponentTuple, WindowKappa, wiener_amalgam_norm
from .symbols import PartitionSet, SymbolSpec, decompose
from .operators import apply_direct, apply_multiplier_fft, apply_via_decomposition
from .sharpness import critical_exponent

__all__ = [
    "BudgetError", "ConvergenceError", "ExponentTuple", "GridSpec", "LabError", "LatticeField",
    "ParameterError", "PartitionSet", "PreconditionError", "QualityWarning", "ResolutionError",
    "StructuralError", "SymbolSpec", "WindowKappa", "apply_direct", "apply_multiplier_fft",
    "apply_via_decomposition", "critical_exponent", "decompose", "forward_transform",
    "inverse_transform", "wiener_amalgam_norm",
]
