"""High-level pipeline: problem -> transcription -> augmentation -> solve."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import collision, collocation, ipm, mpcc
from .mode_schedule import unscale_trajectory
from .nlp import NlpInstance
from .problem import ValidatedProblem, validate_problem
from .trajectory import Trajectory


@dataclass
class RunResult:
    problem: ValidatedProblem
    nlp: NlpInstance
    solution: ipm.Solution
    trajectory: Trajectory
    complementarity: float
    pair_min_distances: dict[str, float] = field(default_factory=dict)
    durations: np.ndarray | None = None

    @property
    def status(self) -> str:
        return self.solution.status

    @property
    def objective(self) -> float:
        return self.solution.objective


def build_nlp(problem: ValidatedProblem,
              scheme: collocation.RootScheme,
              policy: mpcc.RelaxationPolicy) -> NlpInstance:
    nlp = collocation.transcribe(problem, scheme)
    if problem.separations:
        collision.augment(nlp)
    mpcc.reformulate(nlp, policy)
    return nlp


def _pair_distances(nlp: NlpInstance, x: np.ndarray) -> dict[str, float]:
    out: dict[str, float] = {}
    for blk in nlp.blocks:
        if blk.name.startswith("separation_distance"):
            vals = blk.values(x, nlp.num_rows)
            vals = vals[blk.row0:blk.row0 + blk.n_rows]
            out[blk.name.split("separation_distance")[1]] = float(vals.min())
    return out


def solve_problem(problem, scheme: collocation.RootScheme | None = None,
                  policy: mpcc.RelaxationPolicy | None = None,
                  options: ipm.SolverOptions | None = None) -> RunResult:
    """One-stop solve; picks sensible defaults per problem structure."""
    problem = validate_problem(problem)
    if scheme is None:
        order = 1 if (problem.pairs or problem.separations) else 3
        scheme = collocation.RootScheme(collocation.RADAU, order)
    policy = policy or mpcc.RelaxationPolicy(mode=mpcc.PER_POINT_BARRIER)
    # contact problems routinely need several hundred iterations; the
    # convenience entry point is generous by default
    options = options or ipm.SolverOptions(max_iter=3000)
    nlp = build_nlp(problem, scheme, policy)
    solution = ipm.solve(nlp, options)
    trajectory = collocation.extract_trajectory(nlp, solution.x)
    durations = None
    if "duration_param_indices" in problem.extras:
        didx = problem.extras["duration_param_indices"]
        durations = solution.x[nlp.var_index.p][didx]
    return RunResult(
        problem=problem,
        nlp=nlp,
        solution=solution,
        trajectory=trajectory,
        complementarity=mpcc.residual_from_primal(nlp, solution.x),
        pair_min_distances=_pair_distances(nlp, solution.x),
        durations=durations,
    )


def physical_trajectory(result: RunResult) -> Trajectory:
    """Trajectory on absolute time (mode problems get unscaled)."""
    if result.durations is not None:
        return unscale_trajectory(result.trajectory, result.durations)
    return result.trajectory
