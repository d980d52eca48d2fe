"""Complementarity handling: relaxation, aggregation, and penalty rewrites.

Each lowered pair contributes the signed product
sign1*(v1 - nu1) * sign2*(v2 - nu2), which is nonnegative whenever the
variable bounds hold. Five rewrite policies are available:

  per        one inequality  product <= delta  per pair per collocation point
  agg        one inequality per element summing its pairs, bound delta * n_c
  per-mu     like per, delta follows the solver's barrier parameter
  agg-mu     like agg, delta follows the barrier parameter
  penalty    rows removed; rho * sum of products added to the objective
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np

from . import autodiff as ad
from .errors import UnsupportedOrder
from .nlp import INF, NlpInstance, PointPair, RelaxationState
from .problem import BoundSide, ComplementarityPair, ResolvedBounds

PER_POINT = "per"
AGGREGATED = "agg"
PER_POINT_BARRIER = "per-mu"
AGGREGATED_BARRIER = "agg-mu"
PENALTY = "penalty"

MODES = (PER_POINT, AGGREGATED, PER_POINT_BARRIER, AGGREGATED_BARRIER, PENALTY)


@dataclass(frozen=True)
class RelaxationPolicy:
    mode: Literal["per", "agg", "per-mu", "agg-mu", "penalty"] = PER_POINT
    delta: float = 1e-6
    penalty_weight: float = 10.0
    barrier_floor: float = 1e-9

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown relaxation mode {self.mode!r}")
        if self.delta <= 0.0:
            raise ValueError("delta must be positive")
        if self.penalty_weight <= 0.0:
            raise ValueError("penalty weight must be positive")

    @property
    def barrier_linked(self) -> bool:
        return self.mode in (PER_POINT_BARRIER, AGGREGATED_BARRIER)


def alpha_sign(side1: BoundSide, side2: BoundSide) -> int:
    """+1 when both complementarity sides use the same bound kind, else -1."""
    return 1 if side1 == side2 else -1


_PRODUCT_TAPE = None


def _product_tape():
    global _PRODUCT_TAPE
    if _PRODUCT_TAPE is None:
        _PRODUCT_TAPE = ad.record(lambda v: v[0] * v[1], 2, 1)
    return _PRODUCT_TAPE


def reformulate(nlp: NlpInstance, policy: RelaxationPolicy) -> NlpInstance:
    """Materialize the instance's pending complementarity pairs in place.

    Requires collocation order 1 when pairs are present. Returns the same
    instance for chaining; afterwards pending pairs stay recorded for
    residual reporting but no further reformulation may run.
    """
    if nlp.relax is not None:
        raise UnsupportedOrder("complementarity pairs were already reformulated")
    pairs = nlp.pending_pairs
    if nlp.meta.get("scheme") is not None and pairs:
        if nlp.meta["scheme"].order != 1:
            raise UnsupportedOrder(
                "complementarity pairs restrict the collocation order to 1")
    if not pairs:
        nlp.relax = RelaxationState(policy.mode, policy.delta,
                                    policy.penalty_weight, policy.barrier_linked,
                                    np.empty(0, dtype=np.int64), np.empty(0),
                                    policy.barrier_floor)
        return nlp

    L = len(pairs)
    cols = np.array([[p.var1, p.var2] for p in pairs], dtype=np.int64)
    scale = np.array([[p.sign1, p.sign2] for p in pairs], dtype=np.float64)
    offset = np.array([[-p.sign1 * p.nu1, -p.sign2 * p.nu2] for p in pairs])
    elements = np.array([p.element for p in pairs], dtype=np.int64)

    if policy.mode == PENALTY:
        nlp.add_objective_term("complementarity_penalty", _product_tape(), cols,
                               np.full(L, policy.penalty_weight),
                               in_scale=scale, in_offset=offset)
        nlp.relax = RelaxationState(policy.mode, policy.delta,
                                    policy.penalty_weight, False,
                                    np.empty(0, dtype=np.int64), np.empty(0),
                                    policy.barrier_floor)
        return nlp

    if policy.mode in (PER_POINT, PER_POINT_BARRIER):
        rows_local = np.arange(L, dtype=np.int64)[:, None]
        n_rows = L
        row_scale = np.ones(L)
        hi = np.full(L, policy.delta)
    else:
        uniq = np.unique(elements)
        elem_row = {int(e): r for r, e in enumerate(uniq)}
        rows_local = np.array([[elem_row[int(e)]] for e in elements], dtype=np.int64)
        n_rows = len(uniq)
        per_row = np.bincount(rows_local[:, 0], minlength=n_rows).astype(float)
        row_scale = per_row  # right side delta * n_c per element
        hi = policy.delta * per_row

    blk = nlp.add_stage_block("complementarity", _product_tape(), cols, rows_local,
                              lo=np.full(n_rows, -INF), hi=hi,
                              in_scale=scale, in_offset=offset, n_rows=n_rows)
    nlp.relax = RelaxationState(policy.mode, policy.delta, policy.penalty_weight,
                                policy.barrier_linked,
                                blk.row0 + np.arange(n_rows), row_scale,
                                policy.barrier_floor)
    return nlp


def complementarity_residual(pairs: Sequence[ComplementarityPair],
                             y_values: np.ndarray,
                             bounds: ResolvedBounds) -> float:
    """Max signed product over pairs and supplied points.

    ``y_values`` has shape (n_points, n_y) or (n_y,). Nonnegative whenever
    the points respect the algebraic bounds.
    """
    y = np.atleast_2d(np.asarray(y_values, dtype=np.float64))
    worst = 0.0 if pairs else 0.0
    vals = []
    for pair in pairs:
        nu1 = bounds.y_lo[pair.idx1] if pair.side1 == BoundSide.LOWER \
            else bounds.y_hi[pair.idx1]
        nu2 = bounds.y_lo[pair.idx2] if pair.side2 == BoundSide.LOWER \
            else bounds.y_hi[pair.idx2]
        prod = pair.alpha * (y[:, pair.idx1] - nu1) * (y[:, pair.idx2] - nu2)
        vals.append(prod.max())
    return float(max(vals)) if vals else worst


def residual_from_primal(nlp: NlpInstance, primal: np.ndarray) -> float:
    """Max signed complementarity product of an NLP primal vector."""
    x = np.asarray(primal, dtype=np.float64)
    worst = 0.0
    for p in nlp.pending_pairs:
        prod = (p.sign1 * (x[p.var1] - p.nu1)) * (p.sign2 * (x[p.var2] - p.nu2))
        worst = max(worst, float(prod))
    return worst
