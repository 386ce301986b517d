"""Perforated-box flow and heat solvers with their homogenized limit."""

__version__ = "0.1.0"

from .grid import (
    BoxDomain,
    GridSpec,
    PerforatedDomain,
    RRule,
    ScalarField,
    SourceSpec,
    VectorFieldMAC,
)
from .homogenized import MacroSolution, picard_macro
from .linalg import CsrMatrix, SolverConfig
from .micro import MicroSolution, PhysicalParams, picard_micro

__all__ = [
    "BoxDomain",
    "CsrMatrix",
    "GridSpec",
    "MacroSolution",
    "MicroSolution",
    "PerforatedDomain",
    "PhysicalParams",
    "RRule",
    "ScalarField",
    "SolverConfig",
    "SourceSpec",
    "VectorFieldMAC",
    "picard_macro",
    "picard_micro",
]
