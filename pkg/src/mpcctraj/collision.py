"""Pairwise polytope separation through stationarity of the distance QP.

The squared distance between two convex polytopes (given by vertex
matrices) is the optimum of a QP over a product of simplices. Instead of
embedding that QP, its first-order stationarity system becomes part of the
constraint set: convex-combination weights, simplex-equality multipliers,
and nonnegativity multipliers are added as decision variables per pair per
collocation point, with weight/multiplier complementarity routed through
the same relaxation machinery as contact pairs. Because every stationary
point of a convex QP is a global minimizer, any feasible point of the
augmented system carries the true minimum distance. A smoothed norm keeps
the separation inequality differentiable even at contact.

min_distance_oracle provides an independent check: accelerated projected
gradient over the same product of simplices, no multipliers involved.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import BadVertexMatrix, StaticPair
from .nlp import INF, NlpInstance, PointPair
from .problem import PolytopeObject, SeparationSpec

__all__ = [
    "PolytopeObject", "SeparationSpec", "PairVariables", "smoothed_distance",
    "stationarity_residual", "min_distance_oracle", "augment",
    "project_simplex", "solve_pair_stationarity", "added_variable_count",
]


@dataclass
class PairVariables:
    """Per-point unknowns of one pair's stationarity system."""

    alpha_i: np.ndarray
    alpha_j: np.ndarray
    beta_i: float
    beta_j: float
    nu_i: np.ndarray
    nu_j: np.ndarray

    @staticmethod
    def count(n_vi: int, n_vj: int) -> int:
        return 2 * n_vi + 2 * n_vj + 2


def smoothed_distance(p_i, p_j, eps: float):
    """sqrt(|p_i - p_j|^2 + eps^2); differentiable everywhere for eps > 0."""
    acc = eps * eps
    for a, b in zip(p_i, p_j):
        d = a - b
        acc = acc + d * d
    return ad.sqrt(acc)


def stationarity_residual(V_i, V_j, pv: PairVariables) -> np.ndarray:
    """Concatenated first-order conditions of the distance QP.

    Zero exactly when (alpha_i, alpha_j) with the given multipliers is a
    stationary (hence optimal) point of the pair's distance problem.
    """
    V_i = np.asarray(V_i, dtype=np.float64)
    V_j = np.asarray(V_j, dtype=np.float64)
    diff = V_i @ pv.alpha_i - V_j @ pv.alpha_j
    r1 = V_i.T @ diff + pv.beta_i - pv.nu_i
    r2 = V_j.T @ (-diff) + pv.beta_j - pv.nu_j
    r3 = np.array([np.sum(pv.alpha_i) - 1.0, np.sum(pv.alpha_j) - 1.0])
    return np.concatenate([r1, r2, r3])


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the probability simplex."""
    n = v.shape[0]
    if n == 1:
        return np.ones(1)
    srt = np.sort(v)[::-1]
    css = np.cumsum(srt) - 1.0
    idx = np.arange(1, n + 1)
    cond = srt - css / idx > 0
    rho = idx[cond][-1]
    theta = css[cond][-1] / rho
    return np.maximum(v - theta, 0.0)


def min_distance_oracle(V_i, V_j, tol: float = 1e-12,
                        max_iter: int = 20000) -> float:
    """Exact minimum distance by accelerated projected gradient.

    Independent of the stationarity formulation: works directly on the
    convex-combination parameterization with simplex projections.
    """
    V_i = np.asarray(V_i, dtype=np.float64)
    V_j = np.asarray(V_j, dtype=np.float64)
    n_vi, n_vj = V_i.shape[1], V_j.shape[1]
    M = np.hstack([V_i, -V_j])
    lip = 2.0 * np.linalg.norm(M, 2) ** 2
    if lip == 0.0:
        return 0.0
    step = 1.0 / lip
    z = np.concatenate([np.full(n_vi, 1.0 / n_vi), np.full(n_vj, 1.0 / n_vj)])
    zp = z.copy()
    t_acc = 1.0
    val_prev = np.inf
    for _ in range(max_iter):
        w = z + ((t_acc - 1.0) / (t_acc + 2.0)) * (z - zp)
        grad = 2.0 * (M.T @ (M @ w))
        cand = w - step * grad
        zn = np.concatenate([project_simplex(cand[:n_vi]),
                             project_simplex(cand[n_vi:])])
        zp, z = z, zn
        t_acc += 1.0
        val = float(np.sum((M @ z) ** 2))
        if abs(val_prev - val) <= tol * max(1.0, val):
            # monotone restart guards against FISTA ripple near optimum
            grad = 2.0 * (M.T @ (M @ z))
            pg = z - np.concatenate([
                project_simplex(z[:n_vi] - grad[:n_vi]),
                project_simplex(z[n_vi:] - grad[n_vi:])])
            if np.abs(pg).max() <= 1e-9 * max(1.0, np.abs(z).max()):
                break
        val_prev = val
    return float(np.sqrt(max(val, 0.0)))


def _probe_vertex_matrix(obj: PolytopeObject, n_x: int, n_y: int) -> None:
    rng = np.random.default_rng(0xC011)
    mats = []
    for _ in range(2):
        x = rng.standard_normal(n_x)
        y = rng.standard_normal(n_y)
        V = np.asarray(obj.matrix_at(x, y), dtype=np.float64)
        if V.shape != (3, obj.n_vertices):
            raise BadVertexMatrix(
                f"object {obj.name!r} produced shape {V.shape}, expected "
                f"(3, {obj.n_vertices})")
        if not np.all(np.isfinite(V)):
            raise BadVertexMatrix(f"object {obj.name!r} produced non-finite vertices")
        mats.append(V)
    if obj.is_static and not np.array_equal(mats[0], mats[1]):
        raise BadVertexMatrix(
            f"object {obj.name!r} is declared static but moves with the state")


def added_variable_count(n_elements: int, order: int, n_vi: int, n_vj: int,
                         n_specs: int = 1) -> int:
    return n_elements * order * n_specs * PairVariables.count(n_vi, n_vj)


def augment(nlp: NlpInstance, objects: list[PolytopeObject] | None = None,
            specs: list[SeparationSpec] | None = None) -> NlpInstance:
    """Attach pair variables, stationarity/simplex rows, complementarity
    pairs and the smoothed separation inequality for every spec and
    collocation point. Mutates and returns ``nlp``.
    """
    problem = nlp.meta.get("problem")
    if objects is None:
        objects = problem.objects if problem is not None else []
    if specs is None:
        specs = problem.separations if problem is not None else []
    if not specs:
        return nlp
    if len(objects) < 2:
        raise StaticPair("separation constraints need at least two objects")

    n_x, n_y, n_u, n_p = nlp.meta["dims"]
    basis = nlp.meta["basis"]
    order = basis.order
    n_e = len(nlp.meta["widths"])
    vidx = nlp.var_index

    for obj in objects:
        _probe_vertex_matrix(obj, n_x, n_y)

    total_added = 0
    for spec in specs:
        if not (0 <= spec.first < len(objects) and 0 <= spec.second < len(objects)):
            raise BadVertexMatrix("separation spec references an unknown object")
        if spec.first >= spec.second:
            raise BadVertexMatrix("separation pairs must be ordered first < second")
        oi, oj = objects[spec.first], objects[spec.second]
        if oi.is_static and oj.is_static:
            raise StaticPair(
                f"objects {oi.name!r} and {oj.name!r} are both static; the "
                "separation between them is constant")
        n_vi, n_vj = oi.n_vertices, oj.n_vertices
        pv_count = PairVariables.count(n_vi, n_vj)

        # one lane per collocation point; variables appended point by point
        lanes = [(i, j) for i in range(n_e) for j in range(order)]
        L = len(lanes)
        alpha_i_idx = np.zeros((L, n_vi), dtype=np.int64)
        alpha_j_idx = np.zeros((L, n_vj), dtype=np.int64)
        beta_idx = np.zeros((L, 2), dtype=np.int64)
        nu_i_idx = np.zeros((L, n_vi), dtype=np.int64)
        nu_j_idx = np.zeros((L, n_vj), dtype=np.int64)
        for li in range(L):
            alpha_i_idx[li] = nlp.append_variables(n_vi, lo=0.0, init=1.0 / n_vi)
            alpha_j_idx[li] = nlp.append_variables(n_vj, lo=0.0, init=1.0 / n_vj)
            beta_idx[li] = nlp.append_variables(2, init=0.0)
            nu_i_idx[li] = nlp.append_variables(n_vi, lo=0.0, init=1e-2)
            nu_j_idx[li] = nlp.append_variables(n_vj, lo=0.0, init=1e-2)
        total_added += L * pv_count

        # tape inputs: x, y_base, alpha_i, alpha_j, beta_i, beta_j, nu_i, nu_j
        base = n_x + n_y
        n_in = base + pv_count

        def split(v):
            xv = np.array(v[:n_x], dtype=object)
            yv = np.array(v[n_x:base], dtype=object)
            ai = np.array(v[base:base + n_vi], dtype=object)
            aj = np.array(v[base + n_vi:base + n_vi + n_vj], dtype=object)
            bi = v[base + n_vi + n_vj]
            bj = v[base + n_vi + n_vj + 1]
            ni = np.array(v[base + n_vi + n_vj + 2:base + 2 * n_vi + n_vj + 2],
                          dtype=object)
            nj = np.array(v[base + 2 * n_vi + n_vj + 2:], dtype=object)
            return xv, yv, ai, aj, bi, bj, ni, nj

        def vm(obj_, xv, yv):
            V = obj_.matrix_at(xv, yv)
            return np.array(V, dtype=object)

        def stationarity_entry(v):
            xv, yv, ai, aj, bi, bj, ni, nj = split(v)
            Vi = vm(oi, xv, yv)
            Vj = vm(oj, xv, yv)
            diff = np.dot(Vi, ai) - np.dot(Vj, aj)
            r1 = [np.dot(Vi[:, k], diff) + bi - ni[k] for k in range(n_vi)]
            r2 = [-np.dot(Vj[:, k], diff) + bj - nj[k] for k in range(n_vj)]
            r3 = [sum(ai) - 1.0, sum(aj) - 1.0]
            return r1 + r2 + r3

        def separation_entry(v):
            xv, yv, ai, aj, *_ = split(v)
            Vi = vm(oi, xv, yv)
            Vj = vm(oj, xv, yv)
            pi = np.dot(Vi, ai)
            pj = np.dot(Vj, aj)
            return [smoothed_distance(pi, pj, spec.smoothing)]

        n_res = n_vi + n_vj + 2
        stat_tape = ad.record(stationarity_entry, n_in, n_res)
        sep_tape = ad.record(separation_entry, n_in, 1)

        cols = np.zeros((L, n_in), dtype=np.int64)
        for li, (i, j) in enumerate(lanes):
            cols[li, :n_x] = vidx.x[i, j + 1]
            cols[li, n_x:base] = vidx.y[i, j]
            cols[li, base:base + n_vi] = alpha_i_idx[li]
            cols[li, base + n_vi:base + n_vi + n_vj] = alpha_j_idx[li]
            cols[li, base + n_vi + n_vj:base + n_vi + n_vj + 2] = beta_idx[li]
            cols[li, base + n_vi + n_vj + 2:base + 2 * n_vi + n_vj + 2] = nu_i_idx[li]
            cols[li, base + 2 * n_vi + n_vj + 2:] = nu_j_idx[li]

        rows_local = (np.arange(L)[:, None] * n_res + np.arange(n_res)[None, :])
        nlp.add_stage_block(
            f"separation_stationarity[{oi.name},{oj.name}]", stat_tape, cols,
            rows_local, lo=np.zeros(L * n_res), hi=np.zeros(L * n_res))

        floor = float(np.sqrt(spec.min_distance ** 2 + spec.smoothing ** 2))
        nlp.add_stage_block(
            f"separation_distance[{oi.name},{oj.name}]", sep_tape, cols,
            np.arange(L, dtype=np.int64)[:, None],
            lo=np.full(L, floor), hi=np.full(L, INF))

        for li, (i, j) in enumerate(lanes):
            for k in range(n_vi):
                nlp.pending_pairs.append(PointPair(
                    var1=int(alpha_i_idx[li, k]), nu1=0.0, sign1=1,
                    var2=int(nu_i_idx[li, k]), nu2=0.0, sign2=1, element=i))
            for k in range(n_vj):
                nlp.pending_pairs.append(PointPair(
                    var1=int(alpha_j_idx[li, k]), nu1=0.0, sign1=1,
                    var2=int(nu_j_idx[li, k]), nu2=0.0, sign2=1, element=i))

    nlp.meta["collision_vars"] = total_added
    nlp.meta["separation_specs"] = specs
    nlp.meta["separation_objects"] = objects
    return nlp


def solve_pair_stationarity(V_i, V_j, delta: float = 1e-9,
                            kkt_tol: float = 1e-8):
    """Solve one static pair's stationarity system and report the distance.

    Exercises the exact formulation used inside augmented problems: builds a
    small feasibility NLP (stationarity + simplex rows, complementarity
    between weights and multipliers) and runs the interior-point solver.
    """
    from . import ipm, mpcc

    V_i = np.asarray(V_i, dtype=np.float64)
    V_j = np.asarray(V_j, dtype=np.float64)
    n_vi, n_vj = V_i.shape[1], V_j.shape[1]
    nlp = NlpInstance(0)
    ai = nlp.append_variables(n_vi, lo=0.0, init=1.0 / n_vi)
    aj = nlp.append_variables(n_vj, lo=0.0, init=1.0 / n_vj)
    bi = nlp.append_variables(1, init=0.0)
    bj = nlp.append_variables(1, init=0.0)
    ni = nlp.append_variables(n_vi, lo=0.0, init=1e-2)
    nj = nlp.append_variables(n_vj, lo=0.0, init=1e-2)

    def entry(v):
        pv = PairVariables(
            alpha_i=np.array(v[:n_vi], dtype=object),
            alpha_j=np.array(v[n_vi:n_vi + n_vj], dtype=object),
            beta_i=v[n_vi + n_vj],
            beta_j=v[n_vi + n_vj + 1],
            nu_i=np.array(v[n_vi + n_vj + 2:2 * n_vi + n_vj + 2], dtype=object),
            nu_j=np.array(v[2 * n_vi + n_vj + 2:], dtype=object),
        )
        diff = np.dot(np.array(V_i, dtype=object), pv.alpha_i) \
            - np.dot(np.array(V_j, dtype=object), pv.alpha_j)
        r1 = [np.dot(V_i[:, k], diff) + pv.beta_i - pv.nu_i[k] for k in range(n_vi)]
        r2 = [-np.dot(V_j[:, k], diff) + pv.beta_j - pv.nu_j[k] for k in range(n_vj)]
        return r1 + r2 + [sum(pv.alpha_i) - 1.0, sum(pv.alpha_j) - 1.0]

    n_all = 2 * n_vi + 2 * n_vj + 2
    tape = ad.record(entry, n_all, n_vi + n_vj + 2)
    nlp.add_stage_block("stationarity", tape,
                        np.arange(n_all, dtype=np.int64)[None, :],
                        np.arange(n_vi + n_vj + 2, dtype=np.int64)[None, :],
                        lo=np.zeros(n_vi + n_vj + 2), hi=np.zeros(n_vi + n_vj + 2))
    for k in range(n_vi):
        nlp.pending_pairs.append(PointPair(int(ai[k]), 0.0, 1, int(ni[k]), 0.0, 1, 0))
    for k in range(n_vj):
        nlp.pending_pairs.append(PointPair(int(aj[k]), 0.0, 1, int(nj[k]), 0.0, 1, 0))
    mpcc.reformulate(nlp, mpcc.RelaxationPolicy(mode=mpcc.PER_POINT_BARRIER,
                                                barrier_floor=delta))
    sol = ipm.solve(nlp, ipm.SolverOptions(kkt_tol=kkt_tol))
    wi = sol.x[ai]
    wj = sol.x[aj]
    dist = float(np.linalg.norm(V_i @ wi - V_j @ wj))
    return sol, dist
