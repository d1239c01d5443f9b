"""Generalized Poisson-W brackets with structural fields and anholonomic frames.

Scalar fields are parsed from strings and differentiated with nested
forward-mode jets.  On top of that sit the bracket, its vector fields,
frame structure functions, the covariant dynamics and a numerical audit of
the identities that relate them.
"""

__version__ = "0.1.0"

from .expr import ExprError, NumericDomainError, ScalarExpr, eval, eval_jet, parse
from .manifold import (
    FrameError,
    ManifoldError,
    PoissonWManifold,
    covariant_D,
    gpwb,
    gpwb_decomposed,
    lie_bracket,
    omega_pair,
    structural_derivative,
    vec_X,
    vec_XM,
    w_dynamics,
)
from .frames import structure_functions, curvature_apply, qsu
from .dynamics import Trajectory, TrajectoryConfig, integrate
from .audit import AuditReport, run_audit, jacobi_residual
from .scenario import Scenario, ScenarioError, load_scenario

__all__ = [
    "ExprError",
    "NumericDomainError",
    "ScalarExpr",
    "eval",
    "eval_jet",
    "parse",
    "FrameError",
    "ManifoldError",
    "PoissonWManifold",
    "covariant_D",
    "gpwb",
    "gpwb_decomposed",
    "lie_bracket",
    "omega_pair",
    "structural_derivative",
    "vec_X",
    "vec_XM",
    "w_dynamics",
    "structure_functions",
    "curvature_apply",
    "qsu",
    "Trajectory",
    "TrajectoryConfig",
    "integrate",
    "AuditReport",
    "run_audit",
    "jacobi_residual",
    "Scenario",
    "ScenarioError",
    "load_scenario",
]
