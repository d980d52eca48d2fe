"""Collocation bases and transcription of the continuous problem to an NLP.

The differential state on each finite element is a Lagrange polynomial of
degree N_c through the element-start node tau = 0 and the N_c collocation
points; algebraic and control variables use the degree-(N_c - 1) basis on the
collocation points only. Collocation points are the roots of shifted
Legendre polynomials or of the right Radau polynomial (which includes
tau = 1); an explicit-Euler scheme is available for discrete-time models.

Transcription produces one NlpInstance with:
  * linear rows linking state-derivative variables to the states through the
    differentiation matrix, scaled by 1/h_i,
  * dynamics residual rows at every collocation point,
  * linear continuity rows chaining elements and defining the final state,
  * the quadrature objective plus any terminal cost,
  * the initial condition imposed through equal bounds on the first node,
  * lowered complementarity pairs left pending for the reformulation pass.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np
import scipy.sparse as sp
from numpy.polynomial import legendre as npleg

from . import autodiff as ad
from .errors import IncompatibleScheme, LengthMismatch, UnsupportedOrder
from .nlp import INF, NlpInstance, PointPair, VariableIndex
from .problem import BoundSide, ValidatedProblem
from .trajectory import Trajectory, lagrange_derivative, lagrange_value

LEGENDRE = "legendre"
RADAU = "radau"
EULER = "euler"


@dataclass(frozen=True)
class RootScheme:
    kind: Literal["legendre", "radau", "euler"]
    order: int = 1

    def __post_init__(self):
        if self.kind not in (LEGENDRE, RADAU, EULER):
            raise UnsupportedOrder(f"unknown root kind {self.kind!r}")
        if not 1 <= self.order <= 5:
            raise UnsupportedOrder(
                f"collocation order {self.order} outside the supported range [1, 5]")
        if self.kind == EULER and self.order != 1:
            raise UnsupportedOrder("the explicit Euler scheme requires order 1")


def _newton_polish(roots: np.ndarray, coeffs: np.ndarray) -> np.ndarray:
    """Sharpen polynomial roots (Legendre-series coefficients) to ~1e-14."""
    d = npleg.legder(coeffs)
    out = roots.astype(np.float64).copy()
    for _ in range(100):
        f = npleg.legval(out, coeffs)
        fp = npleg.legval(out, d)
        step = f / fp
        out -= step
        if np.max(np.abs(step)) < 1e-14:
            break
    return out


def collocation_points(scheme: RootScheme) -> np.ndarray:
    """Roots r_1..r_Nc in (0, 1], strictly increasing.

    Legendre: roots of the shifted Legendre polynomial of degree N_c.
    Radau: roots of the right Radau polynomial, which always include 1.
    Euler: the single point 1 (the state argument differs, not the grid).
    """
    n = scheme.order
    if scheme.kind == LEGENDRE:
        coeffs = np.zeros(n + 1)
        coeffs[n] = 1.0
        raw, _ = npleg.leggauss(n)
        s = _newton_polish(raw, coeffs)
        return np.sort((s + 1.0) / 2.0)
    # right Radau polynomial: P_n - P_{n-1} on [-1, 1]
    coeffs = np.zeros(n + 1)
    coeffs[n] = 1.0
    coeffs[n - 1] = -1.0
    raw = npleg.Legendre(coeffs).roots()
    raw = np.real(raw[np.abs(np.imag(raw)) < 1e-10])
    interior = raw[raw < 1.0 - 1e-8]
    if interior.size:
        interior = _newton_polish(interior, coeffs)
    s = np.sort(np.concatenate([interior, [1.0]]))
    return (s + 1.0) / 2.0


@dataclass
class CollocationBasis:
    """Bases on one unit element: state nodes {0, r_1..r_Nc}, stage nodes
    {r_1..r_Nc}."""

    scheme: RootScheme
    points: np.ndarray
    state_nodes: np.ndarray
    end_weights: np.ndarray  # state basis evaluated at tau = 1
    diff_matrix: np.ndarray  # [j-1, k] = d/dtau of state basis k at r_j
    quad_weights: np.ndarray  # integrals of the stage basis over [0, 1]

    @property
    def order(self) -> int:
        return len(self.points)

    def state_value(self, j: int, tau: float) -> float:
        return lagrange_value(self.state_nodes, j, tau)

    def state_derivative(self, j: int, tau: float) -> float:
        return lagrange_derivative(self.state_nodes, j, tau)

    def stage_value(self, j: int, tau: float) -> float:
        return lagrange_value(self.points, j, tau)


def basis_eval(basis: CollocationBasis, j: int, tau: float,
               family: str = "state") -> float:
    """Evaluate basis polynomial j at tau; family in {state, stage}."""
    if family == "state":
        return basis.state_value(j, tau)
    return basis.stage_value(j, tau)


def make_basis(scheme: RootScheme) -> CollocationBasis:
    pts = collocation_points(scheme)
    nodes = np.concatenate([[0.0], pts])
    n = len(pts)
    end_w = np.array([lagrange_value(nodes, j, 1.0) for j in range(n + 1)])
    diff = np.array([[lagrange_derivative(nodes, k, pts[j]) for k in range(n + 1)]
                     for j in range(n)])
    quad = np.empty(n)
    for j in range(n):
        others = np.delete(pts, j)
        poly = np.poly(others) if others.size else np.array([1.0])
        denom = np.prod(pts[j] - others) if others.size else 1.0
        anti = np.polyint(poly / denom)
        quad[j] = np.polyval(anti, 1.0) - np.polyval(anti, 0.0)
    return CollocationBasis(scheme, pts, nodes, end_w, diff, quad)


def _layout_variables(n_x, n_y, n_u, n_p, n_e, order) -> tuple[VariableIndex, int]:
    """Element-major interleaved layout; keeps the KKT system banded."""
    counter = 0

    def take(n):
        nonlocal counter
        idx = np.arange(counter, counter + n)
        counter += n
        return idx

    x = np.zeros((n_e, order + 1, n_x), dtype=np.int64)
    xdot = np.zeros((n_e, order, n_x), dtype=np.int64)
    y = np.zeros((n_e, order, n_y), dtype=np.int64)
    u = np.zeros((n_e, order, n_u), dtype=np.int64)
    for i in range(n_e):
        x[i, 0] = take(n_x)
        for j in range(order):
            x[i, j + 1] = take(n_x)
            xdot[i, j] = take(n_x)
            y[i, j] = take(n_y)
            u[i, j] = take(n_u)
    xf = take(n_x)
    p = take(n_p)
    return VariableIndex(x, xdot, y, u, xf, p), counter


def transcribe(problem: ValidatedProblem, scheme: RootScheme) -> NlpInstance:
    """Apply collocation on finite elements, producing the sparse NLP."""
    if problem.n_pairs > 0 and scheme.order != 1:
        raise IncompatibleScheme(
            "complementarity pairs restrict the collocation order to 1")
    basis = make_basis(scheme)
    info = problem.info
    n_x, n_y, n_u, n_p = (info.n_states, info.n_algebraic,
                          info.n_controls, info.n_params)
    n_e, order = info.n_elements, basis.order
    widths = problem.widths
    starts = info.t0 + np.concatenate([[0.0], np.cumsum(widths)[:-1]])
    t_nodes = starts[:, None] + widths[:, None] * basis.points[None, :]  # (N_e, order)

    vidx, num_vars = _layout_variables(n_x, n_y, n_u, n_p, n_e, order)
    nlp = NlpInstance(num_vars)
    nlp.var_index = vidx

    # bounds and initial guess per node
    for i in range(n_e):
        for j in range(order + 1):
            t = starts[i] if j == 0 else t_nodes[i, j - 1]
            b = problem.bounds_at(i, t)
            nlp.lower[vidx.x[i, j]] = b.x_lo
            nlp.upper[vidx.x[i, j]] = b.x_hi
            gx, gxd, gy, gu = problem.guess_at(t)
            nlp.init[vidx.x[i, j]] = gx
            if j >= 1:
                nlp.lower[vidx.xdot[i, j - 1]] = b.xdot_lo
                nlp.upper[vidx.xdot[i, j - 1]] = b.xdot_hi
                nlp.lower[vidx.y[i, j - 1]] = b.y_lo
                nlp.upper[vidx.y[i, j - 1]] = b.y_hi
                nlp.lower[vidx.u[i, j - 1]] = b.u_lo
                nlp.upper[vidx.u[i, j - 1]] = b.u_hi
                nlp.init[vidx.xdot[i, j - 1]] = gxd
                nlp.init[vidx.y[i, j - 1]] = gy
                nlp.init[vidx.u[i, j - 1]] = gu
    b_end = problem.bounds_at(n_e - 1, info.tf)
    if b_end.x_final_lo is not None or b_end.x_final_hi is not None:
        nlp.lower[vidx.xf] = b_end.x_final_lo if b_end.x_final_lo is not None else -INF
        nlp.upper[vidx.xf] = b_end.x_final_hi if b_end.x_final_hi is not None else INF
    else:
        nlp.lower[vidx.xf] = b_end.x_lo
        nlp.upper[vidx.xf] = b_end.x_hi
    gx_end, _, _, _ = problem.guess_at(info.tf)
    nlp.init[vidx.xf] = gx_end
    if n_p:
        b0 = problem.bounds_at(0, info.t0)
        nlp.lower[vidx.p] = b0.p_lo
        nlp.upper[vidx.p] = b0.p_hi
        nlp.init[vidx.p] = problem.param_guess

    # initial condition through equal bounds on the first state node
    nlp.lower[vidx.x[0, 0]] = problem.x0
    nlp.upper[vidx.x[0, 0]] = problem.x0
    nlp.init[vidx.x[0, 0]] = problem.x0

    # (a) derivative-relation rows: xdot_ij - (1/h_i) sum_k D[j,k] x_ik = 0
    rows, cols, vals = [], [], []
    r = 0
    for i in range(n_e):
        for j in range(order):
            for comp in range(n_x):
                rows.append(r)
                cols.append(vidx.xdot[i, j, comp])
                vals.append(1.0)
                for k in range(order + 1):
                    rows.append(r)
                    cols.append(vidx.x[i, k, comp])
                    vals.append(-basis.diff_matrix[j, k] / widths[i])
                r += 1
    deriv = sp.coo_matrix((vals, (rows, cols)), shape=(r, num_vars))
    nlp.add_linear_block("derivative_link", deriv, np.zeros(r),
                         np.zeros(r), np.zeros(r))

    # (b) dynamics residual rows, one stage block per element class
    n_res = problem.residual_dim
    for cls in range(problem.n_classes):
        elements = np.where(problem.element_class == cls)[0]
        if elements.size == 0:
            continue
        dyn = problem.dynamics_for_class(cls)

        def dyn_entry(v, fn=dyn):
            xd = np.array(v[:n_x], dtype=object)
            xv = np.array(v[n_x:2 * n_x], dtype=object)
            yv = np.array(v[2 * n_x:2 * n_x + n_y], dtype=object)
            uv = np.array(v[2 * n_x + n_y:2 * n_x + n_y + n_u], dtype=object)
            pv = np.array(v[2 * n_x + n_y + n_u:2 * n_x + n_y + n_u + n_p],
                          dtype=object)
            tv = v[-1]
            return list(np.atleast_1d(fn(xd, xv, yv, uv, pv, tv)))

        n_in = 2 * n_x + n_y + n_u + n_p + 1
        tape = ad.record(dyn_entry, n_in, n_res)
        lanes = []
        for i in elements:
            for j in range(order):
                state_idx = vidx.x[i, 0] if scheme.kind == EULER else vidx.x[i, j + 1]
                lanes.append((i, j, state_idx))
        L = len(lanes)
        cols_b = np.zeros((L, n_in), dtype=np.int64)
        scale = np.ones((L, n_in))
        offset = np.zeros((L, n_in))
        rows_b = np.zeros((L, n_res), dtype=np.int64)
        for li, (i, j, sidx) in enumerate(lanes):
            cols_b[li, :n_x] = vidx.xdot[i, j]
            cols_b[li, n_x:2 * n_x] = sidx
            cols_b[li, 2 * n_x:2 * n_x + n_y] = vidx.y[i, j]
            cols_b[li, 2 * n_x + n_y:2 * n_x + n_y + n_u] = vidx.u[i, j]
            if n_p:
                cols_b[li, 2 * n_x + n_y + n_u:-1] = vidx.p
            scale[li, -1] = 0.0
            offset[li, -1] = t_nodes[i, j] if scheme.kind != EULER else starts[i]
            rows_b[li] = li * n_res + np.arange(n_res)
        nlp.add_stage_block(f"dynamics_cls{cls}", tape, cols_b, rows_b,
                            np.zeros(L * n_res), np.zeros(L * n_res),
                            in_scale=scale, in_offset=offset)

    # (c) continuity rows and (d) final-state rows
    rows, cols, vals = [], [], []
    r = 0
    for i in range(n_e - 1):
        for comp in range(n_x):
            rows.append(r)
            cols.append(vidx.x[i + 1, 0, comp])
            vals.append(1.0)
            for j in range(order + 1):
                w = basis.end_weights[j]
                if w != 0.0:
                    rows.append(r)
                    cols.append(vidx.x[i, j, comp])
                    vals.append(-w)
            r += 1
    for comp in range(n_x):
        rows.append(r)
        cols.append(vidx.xf[comp])
        vals.append(1.0)
        for j in range(order + 1):
            w = basis.end_weights[j]
            if w != 0.0:
                rows.append(r)
                cols.append(vidx.x[n_e - 1, j, comp])
                vals.append(-w)
        r += 1
    cont = sp.coo_matrix((vals, (rows, cols)), shape=(r, num_vars))
    nlp.add_linear_block("continuity", cont, np.zeros(r), np.zeros(r), np.zeros(r))

    # (e) quadrature objective and terminal cost
    for cls in range(problem.n_classes):
        cost = problem.stage_cost_for_class(cls)
        if cost is None:
            continue
        elements = np.where(problem.element_class == cls)[0]
        if elements.size == 0:
            continue

        def cost_entry(v, fn=cost):
            xv = np.array(v[:n_x], dtype=object)
            yv = np.array(v[n_x:n_x + n_y], dtype=object)
            uv = np.array(v[n_x + n_y:n_x + n_y + n_u], dtype=object)
            pv = np.array(v[n_x + n_y + n_u:n_x + n_y + n_u + n_p], dtype=object)
            return fn(xv, yv, uv, pv, v[-1])

        n_in = n_x + n_y + n_u + n_p + 1
        tape = ad.record(cost_entry, n_in, 1)
        L = elements.size * order
        cols_b = np.zeros((L, n_in), dtype=np.int64)
        scale = np.ones((L, n_in))
        offset = np.zeros((L, n_in))
        weight = np.zeros(L)
        li = 0
        for i in elements:
            for j in range(order):
                cols_b[li, :n_x] = vidx.x[i, j + 1]
                cols_b[li, n_x:n_x + n_y] = vidx.y[i, j]
                cols_b[li, n_x + n_y:n_x + n_y + n_u] = vidx.u[i, j]
                if n_p:
                    cols_b[li, n_x + n_y + n_u:-1] = vidx.p
                scale[li, -1] = 0.0
                offset[li, -1] = t_nodes[i, j]
                weight[li] = widths[i] * basis.quad_weights[j]
                li += 1
        nlp.add_objective_term(f"stage_cost_cls{cls}", tape, cols_b, weight,
                               in_scale=scale, in_offset=offset)

    if problem.mayer is not None:
        mayer = problem.mayer

        def mayer_entry(v, fn=mayer):
            xv = np.array(v[:n_x], dtype=object)
            pv = np.array(v[n_x:], dtype=object)
            return fn(xv, pv)

        tape = ad.record(mayer_entry, n_x + n_p, 1)
        cols_b = np.concatenate([vidx.xf, vidx.p])[None, :]
        nlp.add_objective_term("terminal_cost", tape, cols_b, np.ones(1))

    # lowered complementarity pairs (materialized by the mpcc pass)
    for pair in problem.pairs:
        for i in range(n_e):
            nu1, nu2 = problem.nu_value(pair, i)
            s1 = 1 if pair.side1 == BoundSide.LOWER else -1
            s2 = 1 if pair.side2 == BoundSide.LOWER else -1
            for j in range(order):
                nlp.pending_pairs.append(PointPair(
                    var1=int(vidx.y[i, j, pair.idx1]), nu1=nu1, sign1=s1,
                    var2=int(vidx.y[i, j, pair.idx2]), nu2=nu2, sign2=s2,
                    element=i,
                ))

    nlp.meta.update({
        "problem": problem,
        "basis": basis,
        "scheme": scheme,
        "widths": widths,
        "t0": info.t0,
        "dims": (n_x, n_y, n_u, n_p),
        "base_num_vars": num_vars,
    })
    expected = n_e * (n_x * (order + 1) + (n_x + n_y + n_u) * order) + n_x + n_p
    assert num_vars == expected, "variable layout does not match the count formula"
    return nlp


def extract_trajectory(nlp: NlpInstance, primal: np.ndarray,
                       samples_per_element: int | None = None) -> Trajectory:
    """Rebuild the piecewise-polynomial trajectory from a primal vector."""
    primal = np.asarray(primal, dtype=np.float64)
    if primal.shape != (nlp.num_vars,):
        raise LengthMismatch(
            f"primal has shape {primal.shape}, expected ({nlp.num_vars},)")
    basis: CollocationBasis = nlp.meta["basis"]
    vidx = nlp.var_index
    traj = Trajectory(
        t0=nlp.meta["t0"],
        widths=nlp.meta["widths"],
        state_nodes=basis.state_nodes,
        stage_nodes=basis.points,
        x=primal[vidx.x],
        xdot=primal[vidx.xdot],
        y=primal[vidx.y],
        u=primal[vidx.u],
    )
    return traj
