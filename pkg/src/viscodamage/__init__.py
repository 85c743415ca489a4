"""Phase-field damage in Kelvin-Voigt viscoelastic media.

Semi-implicit time stepping with a Moreau-Yosida regularized irreversibility
constraint, verification harnesses for the discrete scheme, and a
derivative-free boundary traction optimizer.
"""

__version__ = "0.1.0"

from .material import (
    MaterialLaw,
    Penalty,
    PiecewisePolynomial,
    StiffnessTensor,
    apply_stiffness,
    extend_coefficient,
    penalty_slope,
    penalty_value,
    subgradient_residual,
)
from .grid import Grid, build_grid
from .stepper import (
    Discretization,
    InitialData,
    StepConfig,
    Trajectory,
    energy_audit,
    run,
)


__all__ = [
    "Discretization",
    "InitialData",
    "StepConfig",
    "Trajectory",
    "energy_audit",
    "run",
    "Grid",
    "MaterialLaw",
    "Penalty",
    "PiecewisePolynomial",
    "StiffnessTensor",
    "apply_stiffness",
    "build_grid",
    "extend_coefficient",
    "penalty_slope",
    "penalty_value",
    "subgradient_residual",
]
