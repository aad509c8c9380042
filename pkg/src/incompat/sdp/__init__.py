"""Small dense conic solver (Hermitian PSD, nonnegative and free blocks)."""

from .program import FREE, NONNEG, PSD, Block, ConeProgram, RowGroup, embed, realify, unembed
from .solver import (
    DUAL_INFEASIBLE,
    NUMERICAL_FAILURE,
    OPTIMAL,
    PRIMAL_INFEASIBLE,
    ConeSolution,
    SolverError,
    SolverSettings,
    solve,
)

__all__ = [
    "Block", "ConeProgram", "ConeSolution", "RowGroup", "SolverError", "SolverSettings",
    "embed", "realify", "solve", "unembed",
    "PSD", "NONNEG", "FREE",
    "OPTIMAL", "PRIMAL_INFEASIBLE", "DUAL_INFEASIBLE", "NUMERICAL_FAILURE",
]
