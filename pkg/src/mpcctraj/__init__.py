"""Trajectory optimization with contact complementarity and polytope separation.

Continuous-time DAE optimal-control problems are transcribed to sparse NLPs
by orthogonal collocation on finite elements; complementarity constraints
(contacts, collision-avoidance stationarity systems) are rewritten by one of
five relaxation/penalty policies and solved with the built-in tape-AD-backed
primal-dual interior-point method.
"""

from .api import RunResult, build_nlp, physical_trajectory, solve_problem
from .collocation import (
    CollocationBasis,
    RootScheme,
    basis_eval,
    collocation_points,
    extract_trajectory,
    make_basis,
    transcribe,
)
from .ipm import KktResiduals, Solution, SolverOptions, kkt_residuals, solve
from .mode_schedule import ModeSequence, build_mode_problem, unscale_trajectory
from .mpcc import RelaxationPolicy, alpha_sign, complementarity_residual, reformulate
from .collision import (
    PairVariables,
    augment,
    min_distance_oracle,
    smoothed_distance,
    solve_pair_stationarity,
    stationarity_residual,
)
from .problem import (
    BoundSide,
    ComplementarityPair,
    PolytopeObject,
    ProblemDefinition,
    ProblemInfo,
    SeparationSpec,
    ValidatedProblem,
    VariableBounds,
    validate_problem,
)
from .systems import example_names, make_example
from .trajectory import Trajectory

__version__ = "0.1.0"

__all__ = [
    "RunResult", "build_nlp", "physical_trajectory", "solve_problem",
    "CollocationBasis", "RootScheme", "basis_eval", "collocation_points",
    "extract_trajectory", "make_basis", "transcribe",
    "KktResiduals", "Solution", "SolverOptions", "kkt_residuals", "solve",
    "ModeSequence", "build_mode_problem", "unscale_trajectory",
    "RelaxationPolicy", "alpha_sign", "complementarity_residual", "reformulate",
    "PairVariables", "augment", "min_distance_oracle", "smoothed_distance",
    "solve_pair_stationarity", "stationarity_residual",
    "BoundSide", "ComplementarityPair", "PolytopeObject", "ProblemDefinition",
    "ProblemInfo", "SeparationSpec", "ValidatedProblem", "VariableBounds",
    "validate_problem",
    "example_names", "make_example",
    "Trajectory",
    "__version__",
]
