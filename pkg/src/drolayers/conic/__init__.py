"""Linear cone programs over zero/nonneg/second-order cones and their solver."""

from .cones import (
    NONNEG,
    SOC,
    ZERO,
    ConeBlock,
    ConeSpec,
    cone_project,
    cone_violation,
    dual_cone_project,
    dual_cone_violation,
)
from .program import (
    ConeProgram,
    ConeSolution,
    ConicError,
    DimensionMismatch,
    NonFiniteData,
    Residuals,
    SolverSettings,
    Status,
    canonicalize,
)
from .solver import solve

__all__ = [
    "ZERO",
    "NONNEG",
    "SOC",
    "ConeBlock",
    "ConeSpec",
    "ConeProgram",
    "ConeSolution",
    "ConicError",
    "DimensionMismatch",
    "NonFiniteData",
    "Residuals",
    "SolverSettings",
    "Status",
    "canonicalize",
    "cone_project",
    "cone_violation",
    "dual_cone_project",
    "dual_cone_violation",
    "solve",
]
