"""Flat nonlinear-program container.

An NlpInstance is a decision vector with bounds, an objective assembled from
weighted tape terms, and a list of constraint blocks. Two block kinds exist:
linear blocks (constant sparse matrix rows, e.g. derivative links and
continuity) and stage blocks (one tape evaluated on many "lanes", each lane
wiring tape inputs to decision variables through an affine map). Lanes let a
single recorded tape serve every collocation point at once, which is what
makes repeated-structure evaluation cheap.

Constraint rows carry [lo, hi] bounds; equality rows have lo == hi.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .autodiff import (
    SparsityPattern,
    Tape,
    replay,
    weighted_gradient,
    weighted_hessian_action,
    _forward,
    _reverse,
)

INF = float(np.inf)


@dataclass
class LinearBlock:
    name: str
    matrix: sp.csr_matrix
    offset: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    row0: int = 0

    @property
    def n_rows(self) -> int:
        return self.matrix.shape[0]

    def values(self, x: np.ndarray) -> np.ndarray:
        # variables appended after this block was built cannot appear in it
        return self.matrix @ x[:self.matrix.shape[1]] + self.offset

    def jac_coords(self):
        coo = self.matrix.tocoo()
        return coo.row + self.row0, coo.col

    def jac_values(self, x: np.ndarray) -> np.ndarray:
        return self.matrix.tocoo().data


@dataclass
class StageBlock:
    """One tape applied on L lanes; lane l feeds tape input k from
    x[cols[l, k]] * in_scale[l, k] + in_offset[l, k] and scatters output r
    into global row rows[l, r] (rows may repeat: contributions add up)."""

    name: str
    tape: Tape
    cols: np.ndarray
    rows: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    in_scale: np.ndarray | None = None
    in_offset: np.ndarray | None = None
    out_scale: np.ndarray | None = None
    row0: int = 0
    n_rows: int = 0

    def _inputs(self, x: np.ndarray) -> np.ndarray:
        X = x[self.cols.T]
        if self.in_scale is not None:
            X = X * self.in_scale.T
        if self.in_offset is not None:
            X = X + self.in_offset.T
        return X

    def _out_weight(self) -> np.ndarray:
        L, n_out = self.rows.shape
        if self.out_scale is None:
            return np.ones((L, n_out))
        w = np.asarray(self.out_scale, dtype=np.float64)
        if w.ndim == 1:
            w = np.repeat(w[:, None], n_out, axis=1)
        return w

    def values(self, x: np.ndarray, total_rows: int) -> np.ndarray:
        V = replay(self.tape, self._inputs(x))  # (n_out, L)
        w = self._out_weight()
        out = np.zeros(total_rows)
        np.add.at(out, self.rows.T, V * w.T)
        return out

    def jac_entries(self, x: np.ndarray):
        """Yields (rows, cols, vals) triples, one per tape output."""
        X = self._inputs(x)
        vals_ws = _forward(self.tape, X)
        lane_shape = X.shape[1:]
        w = self._out_weight()
        deps = self.tape.input_dependencies()
        for r, slot in enumerate(self.tape.out_slots):
            active = sorted(deps[r])
            if not active:
                continue
            grads = _reverse(self.tape, vals_ws, {int(slot): w[:, r]}, lane_shape)
            for k in active:
                g = grads[k]
                if self.in_scale is not None:
                    g = g * self.in_scale[:, k]
                yield self.rows[:, r], self.cols[:, k], g

    def hess_coords(self):
        """Fixed lower-triangle coordinate list, one group per interacting pair."""
        rows, cols = [], []
        for i, j in _hess_pairs(self.tape):
            gi, gj = self.cols[:, i], self.cols[:, j]
            rows.append(np.maximum(gi, gj))
            cols.append(np.minimum(gi, gj))
        if not rows:
            z = np.empty(0, dtype=np.int64)
            return z, z
        return np.concatenate(rows), np.concatenate(cols)

    def hess_values(self, x: np.ndarray, lam: np.ndarray) -> np.ndarray:
        """Values aligned with hess_coords(); multipliers indexed by global row."""
        pairs = _hess_pairs(self.tape)
        L = self.cols.shape[0]
        if not pairs:
            return np.empty(0)
        lam_lanes = lam[self.rows]  # (L, n_out)
        w = self._out_weight() * lam_lanes
        if not np.any(w):
            return np.zeros(len(pairs) * L)
        X = self._inputs(x)
        n_in = self.tape.n_in
        H = weighted_hessian_action(self.tape, X, w.T, np.eye(n_in))  # (n_in, n_in, L)
        vals = []
        for i, j in pairs:
            v = H[i, j]
            if self.in_scale is not None:
                v = v * self.in_scale[:, i] * self.in_scale[:, j]
            vals.append(v)
        return np.concatenate(vals)

    def jac_pattern_coords(self):
        deps = self.tape.input_dependencies()
        rows, cols = [], []
        for r in range(self.tape.n_out):
            for k in sorted(deps[r]):
                rows.append(self.rows[:, r])
                cols.append(self.cols[:, k])
        if not rows:
            return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
        return np.concatenate(rows), np.concatenate(cols)


def _hess_pairs(tape: Tape) -> list[tuple[int, int]]:
    """Input index pairs (i >= j in tape-local order) that may interact."""
    pairs = getattr(tape, "_hess_pairs", None)
    if pairs is None:
        seen = set()
        for dep in tape.input_dependencies():
            idx = sorted(dep)
            for a in range(len(idx)):
                for b in range(a + 1):
                    seen.add((idx[a], idx[b]))
        pairs = sorted(seen)
        tape._hess_pairs = pairs
    return pairs


@dataclass
class ObjectiveTerm:
    """weight[l] * tape(lane l inputs), summed over lanes."""

    name: str
    tape: Tape
    cols: np.ndarray
    weight: np.ndarray
    in_scale: np.ndarray | None = None
    in_offset: np.ndarray | None = None

    def _inputs(self, x: np.ndarray) -> np.ndarray:
        X = x[self.cols.T]
        if self.in_scale is not None:
            X = X * self.in_scale.T
        if self.in_offset is not None:
            X = X + self.in_offset.T
        return X

    def value(self, x: np.ndarray) -> float:
        V = replay(self.tape, self._inputs(x))
        return float(np.sum(V[0] * self.weight))

    def grad_accumulate(self, x: np.ndarray, out: np.ndarray, factor: float) -> None:
        X = self._inputs(x)
        G = weighted_gradient(self.tape, X, (factor * self.weight)[None, :])
        if self.in_scale is not None:
            G = G * self.in_scale.T
        np.add.at(out, self.cols.T, G)

    def hess_coords(self):
        rows, cols = [], []
        for i, j in _hess_pairs(self.tape):
            gi, gj = self.cols[:, i], self.cols[:, j]
            rows.append(np.maximum(gi, gj))
            cols.append(np.minimum(gi, gj))
        if not rows:
            z = np.empty(0, dtype=np.int64)
            return z, z
        return np.concatenate(rows), np.concatenate(cols)

    def hess_values(self, x: np.ndarray, factor: float) -> np.ndarray:
        pairs = _hess_pairs(self.tape)
        L = self.cols.shape[0]
        if not pairs:
            return np.empty(0)
        if factor == 0.0:
            return np.zeros(len(pairs) * L)
        X = self._inputs(x)
        W = (factor * self.weight)[None, :]
        H = weighted_hessian_action(self.tape, X, W, np.eye(self.tape.n_in))
        vals = []
        for i, j in pairs:
            v = H[i, j]
            if self.in_scale is not None:
                v = v * self.in_scale[:, i] * self.in_scale[:, j]
            vals.append(v)
        return np.concatenate(vals)


@dataclass(frozen=True)
class PointPair:
    """A complementarity product lowered to flat decision variables.

    Contributes the row sign1*(x[var1] - nu1) * sign2*(x[var2] - nu2) <= delta;
    sign is +1 when the pair side references the variable's lower bound and
    -1 for the upper bound, so the product is nonnegative whenever bounds
    hold.
    """

    var1: int
    nu1: float
    sign1: int
    var2: int
    nu2: float
    sign2: int
    element: int


@dataclass
class RelaxationState:
    """Bookkeeping left by the complementarity reformulation for the solver."""

    mode: str
    delta: float
    rho: float
    barrier_linked: bool
    rows: np.ndarray  # global row indices whose upper bound tracks delta
    row_scale: np.ndarray  # per-row multiplier on delta (1 or n_pairs)
    floor: float = 1e-9

    def delta_value(self, mu: float | None) -> float:
        """Effective relaxation for barrier value ``mu``.

        Fixed-delta modes are solved by continuation: the bound starts at the
        barrier parameter and settles at delta once mu drops below it, which
        is the same problem at convergence but keeps early iterates away
        from the complementarity sliver. Barrier-linked modes track mu all
        the way down to the floor.
        """
        if mu is None:
            return max(self.delta, self.floor) if not self.barrier_linked else self.floor
        if self.barrier_linked:
            return max(mu, self.floor)
        return max(mu, self.delta)


@dataclass
class VariableIndex:
    """Maps (class, element, node, component) to flat vector positions."""

    x: np.ndarray  # (N_e, N_c+1, n_x)
    xdot: np.ndarray  # (N_e, N_c, n_x)
    y: np.ndarray  # (N_e, N_c, n_y)
    u: np.ndarray  # (N_e, N_c, n_u)
    xf: np.ndarray  # (n_x,)
    p: np.ndarray  # (n_p,)

    def all_indices(self) -> np.ndarray:
        parts = [self.x.ravel(), self.xdot.ravel(), self.y.ravel(),
                 self.u.ravel(), self.xf.ravel(), self.p.ravel()]
        return np.concatenate([q for q in parts if q.size])


class NlpInstance:
    """Decision vector + objective terms + constraint blocks."""

    def __init__(self, num_vars: int = 0):
        self.num_vars = num_vars
        self.lower = np.full(num_vars, -INF)
        self.upper = np.full(num_vars, INF)
        self.init = np.zeros(num_vars)
        self.blocks: list = []
        self.objective_terms: list[ObjectiveTerm] = []
        self.objective_const: float = 0.0
        self.pending_pairs: list[PointPair] = []
        self.relax: RelaxationState | None = None
        self.var_index: VariableIndex | None = None
        self.meta: dict = {}
        self._rows = 0

    # -- construction ------------------------------------------------------

    def append_variables(self, n: int, lo=-INF, hi=INF, init=0.0) -> np.ndarray:
        idx = np.arange(self.num_vars, self.num_vars + n)
        self.num_vars += n
        self.lower = np.concatenate([self.lower, np.broadcast_to(lo, (n,)).astype(float)])
        self.upper = np.concatenate([self.upper, np.broadcast_to(hi, (n,)).astype(float)])
        self.init = np.concatenate([self.init, np.broadcast_to(init, (n,)).astype(float)])
        return idx

    def add_linear_block(self, name, matrix, offset, lo, hi) -> LinearBlock:
        blk = LinearBlock(name, sp.csr_matrix(matrix), np.asarray(offset, float),
                          np.asarray(lo, float), np.asarray(hi, float), row0=self._rows)
        self._rows += blk.n_rows
        self.blocks.append(blk)
        return blk

    def add_stage_block(self, name, tape, cols, rows_local, lo, hi,
                        in_scale=None, in_offset=None, out_scale=None,
                        n_rows=None) -> StageBlock:
        """rows_local indexes within the block; globalized here."""
        rows_local = np.asarray(rows_local, dtype=np.int64)
        if n_rows is None:
            n_rows = int(rows_local.max()) + 1 if rows_local.size else 0
        blk = StageBlock(
            name, tape, np.asarray(cols, dtype=np.int64),
            rows_local + self._rows,
            np.asarray(lo, float), np.asarray(hi, float),
            in_scale=None if in_scale is None else np.asarray(in_scale, float),
            in_offset=None if in_offset is None else np.asarray(in_offset, float),
            out_scale=None if out_scale is None else np.asarray(out_scale, float),
            row0=self._rows, n_rows=n_rows,
        )
        self._rows += n_rows
        self.blocks.append(blk)
        return blk

    def add_objective_term(self, name, tape, cols, weight,
                           in_scale=None, in_offset=None) -> ObjectiveTerm:
        term = ObjectiveTerm(
            name, tape, np.asarray(cols, dtype=np.int64), np.asarray(weight, float),
            in_scale=None if in_scale is None else np.asarray(in_scale, float),
            in_offset=None if in_offset is None else np.asarray(in_offset, float),
        )
        self.objective_terms.append(term)
        return term

    # -- shape -------------------------------------------------------------

    @property
    def num_rows(self) -> int:
        return self._rows

    def row_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        lo = np.empty(self._rows)
        hi = np.empty(self._rows)
        for blk in self.blocks:
            lo[blk.row0:blk.row0 + blk.n_rows] = blk.lo
            hi[blk.row0:blk.row0 + blk.n_rows] = blk.hi
        return lo, hi

    def block(self, name: str):
        for blk in self.blocks:
            if blk.name == name:
                return blk
        raise KeyError(name)

    # -- evaluation --------------------------------------------------------

    def objective(self, x: np.ndarray) -> float:
        return self.objective_const + sum(t.value(x) for t in self.objective_terms)

    def objective_gradient(self, x: np.ndarray) -> np.ndarray:
        g = np.zeros(self.num_vars)
        for t in self.objective_terms:
            t.grad_accumulate(x, g, 1.0)
        return g

    def constraints(self, x: np.ndarray) -> np.ndarray:
        out = np.zeros(self._rows)
        for blk in self.blocks:
            if isinstance(blk, LinearBlock):
                out[blk.row0:blk.row0 + blk.n_rows] = blk.values(x)
            else:
                out += blk.values(x, self._rows)
        return out

    def jacobian_coo(self, x: np.ndarray):
        """Raw (rows, cols, vals); entry order and count are call-invariant."""
        rows, cols, vals = [], [], []
        for blk in self.blocks:
            if isinstance(blk, LinearBlock):
                r, c = blk.jac_coords()
                rows.append(r)
                cols.append(c)
                vals.append(blk.jac_values(x))
            else:
                for r, c, v in blk.jac_entries(x):
                    rows.append(r)
                    cols.append(c)
                    vals.append(v)
        if not rows:
            z = np.empty(0, dtype=np.int64)
            return z, z, np.empty(0)
        return (np.concatenate(rows), np.concatenate(cols),
                np.concatenate(vals))

    def jacobian(self, x: np.ndarray) -> sp.csr_matrix:
        r, c, v = self.jacobian_coo(x)
        return sp.coo_matrix((v, (r, c)), shape=(self._rows, self.num_vars)).tocsr()

    def hessian_coords(self):
        """Fixed lower-triangle coordinates for hessian_values()."""
        rows, cols = [], []
        for t in self.objective_terms:
            r, c = t.hess_coords()
            rows.append(r)
            cols.append(c)
        for blk in self.blocks:
            if isinstance(blk, StageBlock):
                r, c = blk.hess_coords()
                rows.append(r)
                cols.append(c)
        if not rows:
            z = np.empty(0, dtype=np.int64)
            return z, z
        return np.concatenate(rows), np.concatenate(cols)

    def hessian_values(self, x: np.ndarray, obj_factor: float, lam: np.ndarray) -> np.ndarray:
        vals = []
        for t in self.objective_terms:
            vals.append(t.hess_values(x, obj_factor))
        for blk in self.blocks:
            if isinstance(blk, StageBlock):
                vals.append(blk.hess_values(x, lam))
        if not vals:
            return np.empty(0)
        return np.concatenate(vals)

    def hessian_coo(self, x: np.ndarray, obj_factor: float, lam: np.ndarray):
        """Raw lower-triangle (rows, cols, vals); order is call-invariant."""
        r, c = self.hessian_coords()
        return r, c, self.hessian_values(x, obj_factor, lam)

    def hessian(self, x: np.ndarray, obj_factor: float, lam: np.ndarray) -> sp.coo_matrix:
        """Lower triangle of obj_factor * grad^2 f + sum lam_i grad^2 c_i."""
        r, c, v = self.hessian_coo(x, obj_factor, lam)
        return sp.coo_matrix((v, (r, c)), shape=(self.num_vars, self.num_vars))

    # -- structure ---------------------------------------------------------

    def jacobian_pattern(self) -> SparsityPattern:
        rows, cols = [], []
        for blk in self.blocks:
            if isinstance(blk, LinearBlock):
                r, c = blk.jac_coords()
            else:
                r, c = blk.jac_pattern_coords()
            rows.append(r)
            cols.append(c)
        if not rows:
            return SparsityPattern.from_coords((self._rows, self.num_vars), [], [])
        return SparsityPattern.from_coords(
            (self._rows, self.num_vars), np.concatenate(rows), np.concatenate(cols)
        )

    def hessian_pattern(self) -> SparsityPattern:
        r, c = self.hessian_coords()
        return SparsityPattern.from_coords((self.num_vars, self.num_vars), r, c)
