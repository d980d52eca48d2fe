"""User-facing problem description and validation.

A dynamic optimization problem is described by plain data (dimensions, grid,
bounds, complementarity index pairs) plus evaluator callbacks for the DAE
residual, stage cost, optional terminal cost, and the initial guess. The
residual convention is f(xdot, x, y, u, p, t) = 0 with exactly
n_states + n_algebraic - n_pairs rows; complementarity rows are generated by
the toolkit from the declared pairs, never by user code.

validate_problem probes the callbacks once at the initial guess, checks
every declared dimension, and returns an immutable ValidatedProblem that the
transcription consumes. Validation is idempotent. Evaluator callbacks must
be re-entrant; the solver may evaluate different time points concurrently.
"""

from __future__ import annotations

import inspect
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import (
    BadComplementarity,
    BadGrid,
    DimensionMismatch,
    MissingParamData,
)

INF = float(np.inf)


class BoundSide(Enum):
    LOWER = "lower"
    UPPER = "upper"


@dataclass(frozen=True)
class ProblemInfo:
    """Dimensions and grid of the continuous-time problem."""

    n_states: int
    n_algebraic: int
    n_controls: int
    n_params: int = 0
    n_elements: int = 1
    element_widths: Optional[Sequence[float]] = None
    t0: float = 0.0
    tf: float = 1.0

    def widths(self) -> np.ndarray:
        if self.element_widths is None:
            return np.full(self.n_elements, (self.tf - self.t0) / self.n_elements)
        return np.asarray(self.element_widths, dtype=np.float64)


def _pair_vec(value, n, default) -> np.ndarray:
    if value is None:
        return np.full(n, default, dtype=np.float64)
    arr = np.asarray(value, dtype=np.float64)
    if arr.ndim == 0:
        return np.full(n, float(arr))
    return arr


@dataclass
class VariableBounds:
    """Box bounds per variable class; entries may be +-inf."""

    x_lo: Optional[Sequence[float]] = None
    x_hi: Optional[Sequence[float]] = None
    xdot_lo: Optional[Sequence[float]] = None
    xdot_hi: Optional[Sequence[float]] = None
    y_lo: Optional[Sequence[float]] = None
    y_hi: Optional[Sequence[float]] = None
    u_lo: Optional[Sequence[float]] = None
    u_hi: Optional[Sequence[float]] = None
    p_lo: Optional[Sequence[float]] = None
    p_hi: Optional[Sequence[float]] = None
    x_final_lo: Optional[Sequence[float]] = None
    x_final_hi: Optional[Sequence[float]] = None

    def resolved(self, info: ProblemInfo) -> "ResolvedBounds":
        nx, ny, nu, npar = (info.n_states, info.n_algebraic,
                            info.n_controls, info.n_params)
        rb = ResolvedBounds(
            x_lo=_pair_vec(self.x_lo, nx, -INF), x_hi=_pair_vec(self.x_hi, nx, INF),
            xdot_lo=_pair_vec(self.xdot_lo, nx, -INF),
            xdot_hi=_pair_vec(self.xdot_hi, nx, INF),
            y_lo=_pair_vec(self.y_lo, ny, -INF), y_hi=_pair_vec(self.y_hi, ny, INF),
            u_lo=_pair_vec(self.u_lo, nu, -INF), u_hi=_pair_vec(self.u_hi, nu, INF),
            p_lo=_pair_vec(self.p_lo, npar, -INF),
            p_hi=_pair_vec(self.p_hi, npar, INF),
            x_final_lo=_pair_vec(self.x_final_lo, nx, -INF)
            if self.x_final_lo is not None else None,
            x_final_hi=_pair_vec(self.x_final_hi, nx, INF)
            if self.x_final_hi is not None else None,
        )
        rb.check()
        return rb


@dataclass
class ResolvedBounds:
    x_lo: np.ndarray
    x_hi: np.ndarray
    xdot_lo: np.ndarray
    xdot_hi: np.ndarray
    y_lo: np.ndarray
    y_hi: np.ndarray
    u_lo: np.ndarray
    u_hi: np.ndarray
    p_lo: np.ndarray
    p_hi: np.ndarray
    x_final_lo: Optional[np.ndarray]
    x_final_hi: Optional[np.ndarray]

    def check(self) -> None:
        for lo, hi, name in ((self.x_lo, self.x_hi, "x"),
                             (self.xdot_lo, self.xdot_hi, "xdot"),
                             (self.y_lo, self.y_hi, "y"),
                             (self.u_lo, self.u_hi, "u"),
                             (self.p_lo, self.p_hi, "p")):
            if np.any(lo > hi):
                raise DimensionMismatch(f"lower bound exceeds upper bound for {name}")


@dataclass(frozen=True)
class ComplementarityPair:
    """Product (y[idx1] - nu1)(y[idx2] - nu2) = 0 with nu taken from the
    declared bound side of each algebraic variable."""

    idx1: int
    side1: BoundSide
    idx2: int
    side2: BoundSide

    @property
    def alpha(self) -> int:
        """+1 when both sides reference the same bound kind, else -1; makes
        the signed product nonnegative whenever the bounds hold."""
        return 1 if self.side1 == self.side2 else -1


@dataclass
class PolytopeObject:
    """Convex body given by a 3 x n_vertices coordinate matrix.

    For moving bodies ``vertex_map(x, y)`` returns the matrix as a nested
    list/array of expressions; static bodies pass a constant matrix.
    """

    name: str
    n_vertices: int
    is_static: bool = False
    vertices: Optional[np.ndarray] = None
    vertex_map: Optional[Callable] = None

    def matrix_at(self, x, y):
        if self.is_static and self.vertices is not None:
            return np.asarray(self.vertices, dtype=np.float64)
        return self.vertex_map(x, y)


@dataclass(frozen=True)
class SeparationSpec:
    """Minimum-distance requirement between two polytope objects."""

    first: int
    second: int
    min_distance: float = 1e-2
    smoothing: float = 1e-4


@dataclass
class ProblemDefinition:
    info: ProblemInfo
    x0: Sequence[float]
    dynamics: Callable
    stage_cost: Optional[Callable] = None
    mayer_cost: Optional[Callable] = None
    bounds: VariableBounds | Callable[[float], VariableBounds] | None = None
    initial_guess: Optional[Callable] = None
    param_guess: Optional[Sequence[float]] = None
    complementarities: list[ComplementarityPair] = field(default_factory=list)
    objects: list[PolytopeObject] = field(default_factory=list)
    separations: list[SeparationSpec] = field(default_factory=list)
    name: str = "problem"


def _arity(fn: Callable) -> int:
    try:
        params = [p for p in inspect.signature(fn).parameters.values()
                  if p.kind in (p.POSITIONAL_ONLY, p.POSITIONAL_OR_KEYWORD)]
        return len(params)
    except (TypeError, ValueError):
        return -1


def _wrap_dynamics(fn: Callable) -> Callable:
    if _arity(fn) == 5:
        return lambda xdot, x, y, u, p, t: fn(xdot, x, y, u, p)
    return fn


def _wrap_cost(fn: Callable) -> Callable:
    if _arity(fn) == 4:
        return lambda x, y, u, p, t: fn(x, y, u, p)
    return fn


@dataclass
class ValidatedProblem:
    """Immutable, dimension-checked problem ready for transcription."""

    info: ProblemInfo
    x0: np.ndarray
    widths: np.ndarray
    pairs: list[ComplementarityPair]
    n_pairs: int
    residual_dim: int
    objects: list[PolytopeObject]
    separations: list[SeparationSpec]
    param_guess: np.ndarray
    name: str
    _dynamics: list[Callable]
    _stage_cost: list[Optional[Callable]]
    _mayer: Optional[Callable]
    _bounds_static: Optional[ResolvedBounds]
    _bounds_fn: Optional[Callable]
    _guess: Callable
    element_class: np.ndarray = None  # mode index per element; zeros by default
    element_bounds: Optional[list[ResolvedBounds]] = None
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.element_class is None:
            self.element_class = np.zeros(self.info.n_elements, dtype=np.int64)

    @property
    def n_classes(self) -> int:
        return len(self._dynamics)

    def dynamics_for_class(self, cls: int) -> Callable:
        return self._dynamics[cls]

    def stage_cost_for_class(self, cls: int) -> Optional[Callable]:
        return self._stage_cost[cls]

    @property
    def mayer(self) -> Optional[Callable]:
        return self._mayer

    def bounds_at(self, element: int, t: float) -> ResolvedBounds:
        if self.element_bounds is not None:
            return self.element_bounds[element]
        if self._bounds_fn is not None:
            vb = self._bounds_fn(t)
            return vb.resolved(self.info)
        return self._bounds_static

    def guess_at(self, t: float):
        gx, gxd, gy, gu = self._guess(t)
        return (np.asarray(gx, dtype=np.float64),
                np.asarray(gxd, dtype=np.float64),
                np.asarray(gy, dtype=np.float64),
                np.asarray(gu, dtype=np.float64))

    def nu_value(self, pair: ComplementarityPair, element: int = 0) -> tuple[float, float]:
        """Bound values entering the complementarity product."""
        t_mid = self.info.t0 + float(np.sum(self.widths[:element])) \
            + 0.5 * self.widths[element]
        b = self.bounds_at(element, t_mid)
        nu1 = b.y_lo[pair.idx1] if pair.side1 == BoundSide.LOWER else b.y_hi[pair.idx1]
        nu2 = b.y_lo[pair.idx2] if pair.side2 == BoundSide.LOWER else b.y_hi[pair.idx2]
        return float(nu1), float(nu2)


def _default_guess(problem: ProblemDefinition):
    info = problem.info
    x0 = np.asarray(problem.x0, dtype=np.float64)

    def guess(t):
        return (x0,
                np.zeros(info.n_states),
                np.zeros(info.n_algebraic),
                np.zeros(info.n_controls))

    return guess


def validate_problem(definition: ProblemDefinition | ValidatedProblem) -> ValidatedProblem:
    """Check dimensions, grid, pairs and parameter data; probe evaluators once.

    Idempotent: validating an already-validated problem returns it unchanged.
    """
    if isinstance(definition, ValidatedProblem):
        return definition
    info = definition.info
    for label, n in (("n_states", info.n_states), ("n_algebraic", info.n_algebraic),
                     ("n_controls", info.n_controls), ("n_params", info.n_params)):
        if n < 0:
            raise DimensionMismatch(f"{label} must be nonnegative, got {n}")
    if info.n_elements < 1:
        raise BadGrid("at least one finite element is required")

    widths = info.widths()
    if len(widths) != info.n_elements:
        raise BadGrid(f"expected {info.n_elements} element widths, got {len(widths)}")
    if np.any(widths <= 0.0):
        raise BadGrid("element widths must be positive")
    horizon = info.tf - info.t0
    if horizon <= 0.0:
        raise BadGrid("tf must exceed t0")
    if abs(float(np.sum(widths)) - horizon) > 1e-12 * max(1.0, abs(horizon)):
        raise BadGrid(
            f"element widths sum to {float(np.sum(widths))}, expected {horizon}")

    x0 = np.asarray(definition.x0, dtype=np.float64)
    if x0.shape != (info.n_states,):
        raise DimensionMismatch(
            f"x0 has shape {x0.shape}, expected ({info.n_states},)")

    bounds = definition.bounds if definition.bounds is not None else VariableBounds()
    bounds_fn = None
    bounds_static = None
    if callable(bounds):
        bounds_fn = bounds
        probe = bounds(info.t0)
        probe.resolved(info)
    else:
        bounds_static = bounds.resolved(info)

    pairs = list(definition.complementarities)
    n_pairs = len(pairs)
    if n_pairs > info.n_algebraic:
        raise BadComplementarity(
            f"{n_pairs} pairs exceed the {info.n_algebraic} algebraic variables")
    ref = bounds_static if bounds_static is not None else bounds(info.t0).resolved(info)
    for pair in pairs:
        for idx in (pair.idx1, pair.idx2):
            if not 0 <= idx < info.n_algebraic:
                raise BadComplementarity(
                    f"pair index {idx} outside [0, {info.n_algebraic})")
        if pair.idx1 == pair.idx2:
            raise BadComplementarity("a pair must reference two distinct indices")
        for idx, side in ((pair.idx1, pair.side1), (pair.idx2, pair.side2)):
            nu = ref.y_lo[idx] if side == BoundSide.LOWER else ref.y_hi[idx]
            if not math.isfinite(nu):
                raise BadComplementarity(
                    f"complementarity side references an infinite {side.value} "
                    f"bound on algebraic variable {idx}")

    if info.n_params > 0:
        if definition.param_guess is None:
            raise MissingParamData("n_params > 0 requires a parameter guess")
        if not callable(bounds):
            if definition.bounds is None or (definition.bounds.p_lo is None
                                             and definition.bounds.p_hi is None):
                raise MissingParamData("n_params > 0 requires parameter bounds")
        param_guess = np.asarray(definition.param_guess, dtype=np.float64)
        if param_guess.shape != (info.n_params,):
            raise DimensionMismatch(
                f"parameter guess has shape {param_guess.shape}, "
                f"expected ({info.n_params},)")
    else:
        param_guess = np.zeros(0)

    guess = definition.initial_guess or _default_guess(definition)
    dyn = _wrap_dynamics(definition.dynamics)
    cost = _wrap_cost(definition.stage_cost) if definition.stage_cost else None

    # probe once at the initial point
    t_probe = info.t0
    gx, gxd, gy, gu = (np.asarray(v, dtype=np.float64) for v in guess(t_probe))
    for arr, n, label in ((gx, info.n_states, "x"), (gxd, info.n_states, "xdot"),
                          (gy, info.n_algebraic, "y"), (gu, info.n_controls, "u")):
        if arr.shape != (n,):
            raise DimensionMismatch(
                f"initial guess for {label} has shape {arr.shape}, expected ({n},)")
    expected = info.n_states + info.n_algebraic - n_pairs
    res = np.atleast_1d(np.asarray(
        dyn(gxd, gx, gy, gu, param_guess, t_probe), dtype=np.float64))
    if res.shape != (expected,):
        raise DimensionMismatch(
            f"dynamics residual has length {res.shape[0]}, expected {expected} "
            f"(n_states + n_algebraic - n_pairs)")
    if not np.all(np.isfinite(res)):
        raise DimensionMismatch("dynamics residual is not finite at the initial guess")
    if cost is not None:
        c = float(cost(gx, gy, gu, param_guess, t_probe))
        if not math.isfinite(c):
            raise DimensionMismatch("stage cost is not finite at the initial guess")
    if definition.mayer_cost is not None:
        phi = float(definition.mayer_cost(gx, param_guess))
        if not math.isfinite(phi):
            raise DimensionMismatch("terminal cost is not finite at the initial guess")

    return ValidatedProblem(
        info=info,
        x0=x0,
        widths=widths,
        pairs=pairs,
        n_pairs=n_pairs,
        residual_dim=expected,
        objects=list(definition.objects),
        separations=list(definition.separations),
        param_guess=param_guess,
        name=definition.name,
        _dynamics=[dyn],
        _stage_cost=[cost],
        _mayer=definition.mayer_cost,
        _bounds_static=bounds_static,
        _bounds_fn=bounds_fn,
        _guess=guess,
    )
