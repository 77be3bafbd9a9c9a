"""Linearized three-level difference schemes for the coupled fractional
Ginzburg-Landau equations."""

from cfgle.fracops import (
    FracCoefficients,
    FracOperator,
    apply_average,
    apply_dense,
    apply_fft,
    build_coefficients,
    build_operator,
    seminorm_quadratic,
)
from cfgle.scheme import (
    FieldCoefficients,
    FieldPair,
    Mesh,
    ProblemSpec,
    SolverConfig,
    TrajectoryResult,
    bootstrap,
    richardson,
    run,
    step,
    step_fourth,
)

__all__ = [
    "FracCoefficients",
    "FracOperator",
    "apply_average",
    "apply_dense",
    "apply_fft",
    "build_coefficients",
    "build_operator",
    "seminorm_quadratic",
    "FieldCoefficients",
    "FieldPair",
    "Mesh",
    "ProblemSpec",
    "SolverConfig",
    "TrajectoryResult",
    "bootstrap",
    "richardson",
    "run",
    "step",
    "step_fourth",
]
