"""Primal-dual interior-point solver for the assembled NLP.

Inequality rows get bounded slacks at setup, so the working problem is
min f(x) s.t. E(z) = 0, l <= z <= u with z = (x, s). Bounds enter through a
log barrier with parameter mu driven down a monotone schedule; each inner
step solves the regularized augmented KKT system

    [ W + Sigma + gw*I   A^T  ] [dz  ]   [ -grad_phi - A^T lam ]
    [ A                 -gc*I ] [dlam] = [ -E                  ]

via a sparse LDL^T factorization (CHOLMOD) or a dense one below a size
threshold. Wrong inertia or a failed factorization bumps the primal
regularization gw. Steps respect the fraction-to-the-boundary rule and a
backtracking line search on an l1 exact-penalty merit function.

Variables whose lower and upper bounds coincide are eliminated up front and
restored in the reported solution, which keeps pinned values exact.

When the instance carries a barrier-linked complementarity relaxation, the
relaxed rows' upper bounds are rewritten to max(mu, floor) at every barrier
update, so the relaxation tightens together with the barrier.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp

from .nlp import NlpInstance

logger = logging.getLogger(__name__)

INF = float(np.inf)

OPTIMAL = "Optimal"
MAX_ITER = "MaxIter"
INFEASIBLE = "Infeasible-heuristic"
LINE_SEARCH_FAILURE = "LineSearchFailure"
SINGULAR_KKT = "SingularKkt"


@dataclass
class SolverOptions:
    kkt_tol: float = 1e-8
    max_iter: int = 500
    mu_init: float = 0.1
    mu_shrink: float = 0.2
    mu_min: float = 1e-9
    bound_push: float = 1e-2
    fraction_to_boundary: float = 0.995
    backtrack_factor: float = 0.5
    max_backtracks: int = 30
    kappa_eps: float = 10.0
    reg_init: float = 1e-8
    reg_grow: float = 10.0
    reg_max: float = 1e8
    reg_shrink: float = 1.0 / 3.0  # warm-start factor from last successful value
    reg_grow_slow: float = 8.0  # growth once warm-started
    dual_reg: float = 1e-8
    dense_threshold: int = 500
    scale_grad_max: float = 100.0  # gradient-based row/objective scaling cap
    verbose: bool = False

    def validate(self) -> None:
        assert 0.0 < self.mu_shrink < 1.0
        assert 0.0 < self.fraction_to_boundary < 1.0
        assert self.kkt_tol > 0.0 and self.mu_min > 0.0
        assert 0.0 < self.backtrack_factor < 1.0


@dataclass
class KktResiduals:
    stationarity: float
    feasibility: float
    complementarity: float

    def worst(self) -> float:
        return max(self.stationarity, self.feasibility, self.complementarity)


@dataclass
class IterationRecord:
    iteration: int
    mu: float
    objective: float
    stationarity: float
    feasibility: float
    complementarity: float
    step_primal: float
    step_dual: float
    backtracks: int

    def format(self) -> str:
        return ("iter=%d mu=%.3e obj=%.9e stat=%.3e feas=%.3e cmpl=%.3e "
                "alpha_p=%.3e alpha_d=%.3e bt=%d" % (
                    self.iteration, self.mu, self.objective, self.stationarity,
                    self.feasibility, self.complementarity, self.step_primal,
                    self.step_dual, self.backtracks))


@dataclass
class Solution:
    status: str
    x: np.ndarray
    row_multipliers: np.ndarray
    bound_lower: np.ndarray
    bound_upper: np.ndarray
    objective: float
    residuals: KktResiduals
    iterations: int
    mu_log: list[float] = field(default_factory=list)
    iteration_log: list[IterationRecord] = field(default_factory=list)
    delta_final: float | None = None

    @property
    def is_optimal(self) -> bool:
        return self.status == OPTIMAL


def _refine(matvec, solve_once, rhs, sol, rounds: int = 2) -> np.ndarray:
    """Fixed-count iterative refinement; recovers accuracy lost to
    ill-conditioned factors near convergence."""
    for _ in range(rounds):
        r = rhs - matvec(sol)
        if not np.all(np.isfinite(r)):
            break
        nr = np.abs(r).max() if r.size else 0.0
        if nr <= 1e-14 * max(1.0, np.abs(rhs).max()):
            break
        corr = solve_once(r)
        if not np.all(np.isfinite(corr)):
            break
        sol = sol + corr
    return sol


class _DenseKkt:
    def __init__(self, dim: int):
        self.dim = dim
        self._mat = None
        self._lu = None

    def factor(self, rows, cols, vals):
        K = np.zeros((self.dim, self.dim))
        np.add.at(K, (rows, cols), vals)
        strict = rows > cols
        np.add.at(K, (cols[strict], rows[strict]), vals[strict])
        if not np.all(np.isfinite(K)):
            return None
        try:
            _, d, _ = la.ldl(K, lower=True)
        except la.LinAlgError:
            return None
        pos = neg = 0
        i = 0
        nd = d.shape[0]
        while i < nd:
            if i + 1 < nd and abs(d[i, i + 1]) > 1e-300:
                pos += 1  # sytrf 2x2 pivot blocks are indefinite
                neg += 1
                i += 2
            else:
                dv = d[i, i]
                if dv > 0:
                    pos += 1
                elif dv < 0:
                    neg += 1
                else:
                    return None
                i += 1
        self._mat = K
        try:
            self._lu = la.lu_factor(K)
        except la.LinAlgError:
            return None
        return pos, neg

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        sol = la.lu_solve(self._lu, rhs)
        return _refine(lambda v: self._mat @ v,
                       lambda r: la.lu_solve(self._lu, r), rhs, sol)


class _SparseKkt:
    """CHOLMOD simplicial LDL^T; inertia read off the factor diagonal."""

    def __init__(self, dim: int, rows, cols):
        import cvxopt
        import cvxopt.cholmod as cholmod

        self._cvxopt = cvxopt
        self._cholmod = cholmod
        cholmod.options["supernodal"] = 0
        self.dim = dim
        key = cols.astype(np.int64) * dim + rows.astype(np.int64)
        self._ukey, self._inv = np.unique(key, return_inverse=True)
        urows = (self._ukey % dim).astype(int)
        ucols = (self._ukey // dim).astype(int)
        self._A = cvxopt.spmatrix(
            np.zeros(len(self._ukey)), urows.tolist(), ucols.tolist(), (dim, dim)
        )
        self._F = cholmod.symbolic(self._A)
        self._ones = cvxopt.matrix(1.0, (dim, 1))

    def factor(self, rows, cols, vals):
        acc = np.zeros(len(self._ukey))
        np.add.at(acc, self._inv, vals)
        if not np.all(np.isfinite(acc)):
            return None
        dim = self.dim
        urows = (self._ukey % dim)
        ucols = (self._ukey // dim)
        low = sp.coo_matrix((acc, (urows, ucols)), shape=(dim, dim)).tocsr()
        strict = sp.coo_matrix(
            (acc[urows != ucols],
             (ucols[urows != ucols], urows[urows != ucols])),
            shape=(dim, dim),
        ).tocsr()
        self._sym = low + strict
        self._A.V = self._cvxopt.matrix(acc)
        try:
            self._cholmod.numeric(self._A, self._F)
            dinv = +self._ones
            self._cholmod.solve(self._F, dinv, sys=6)
        except ArithmeticError:
            return None
        d = np.array(dinv).ravel()
        if not np.all(np.isfinite(d)) or np.any(d == 0.0):
            return None
        return int(np.sum(d > 0)), int(np.sum(d < 0))

    def _solve_once(self, rhs: np.ndarray) -> np.ndarray:
        b = self._cvxopt.matrix(rhs)
        self._cholmod.solve(self._F, b)
        return np.array(b).ravel()

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        sol = self._solve_once(rhs)
        return _refine(lambda v: self._sym @ v, self._solve_once, rhs, sol)


def _norm_inf(v: np.ndarray) -> float:
    return float(np.abs(v).max()) if v.size else 0.0


class _Workspace:
    """Reduced problem: fixed variables eliminated, slacks appended,
    gradient-based row/objective scaling applied throughout."""

    def __init__(self, nlp: NlpInstance, opts: SolverOptions):
        self.nlp = nlp
        self.opts = opts
        lower, upper = nlp.lower.copy(), nlp.upper.copy()
        self.fixed = lower == upper
        self.free_idx = np.where(~self.fixed)[0]
        self.n_free = len(self.free_idx)
        self.fixed_values = np.where(self.fixed, lower, 0.0)
        self.var_map = np.full(nlp.num_vars, -1, dtype=np.int64)
        self.var_map[self.free_idx] = np.arange(self.n_free)

        self.m = nlp.num_rows
        x_probe = np.where(self.fixed, self.fixed_values, nlp.init)
        jr, jc, jv0 = nlp.jacobian_coo(x_probe)
        keep = ~self.fixed[jc]
        self._jac_keep = keep
        self._jac_rows = jr[keep]
        self._jac_cols_z = self.var_map[jc[keep]]

        # gradient-based scaling tames rows/objective with huge gradients
        gmax = opts.scale_grad_max
        row_inf = np.zeros(self.m)
        if jr.size:
            np.maximum.at(row_inf, jr, np.abs(jv0))
        self.row_scale = np.where(row_inf > gmax,
                                  gmax / np.maximum(row_inf, 1e-300), 1.0)
        g0 = np.abs(nlp.objective_gradient(x_probe))
        if not np.all(np.isfinite(g0)):
            g0 = np.zeros_like(g0)
        g0max = g0.max() if g0.size else 0.0
        self.obj_scale = gmax / g0max if g0max > gmax else 1.0

        raw_lo, raw_hi = nlp.row_bounds()
        self.row_lo = raw_lo * self.row_scale
        self.row_hi = raw_hi * self.row_scale
        self.eq_mask = self.row_lo == self.row_hi
        self.ineq_idx = np.where(~self.eq_mask)[0]
        self.m_ineq = len(self.ineq_idx)
        self.slack_of_row = np.full(self.m, -1, dtype=np.int64)
        self.slack_of_row[self.ineq_idx] = self.n_free + np.arange(self.m_ineq)

        self.n_z = self.n_free + self.m_ineq
        self.z_lo = np.concatenate([lower[self.free_idx], self.row_lo[self.ineq_idx]])
        self.z_hi = np.concatenate([upper[self.free_idx], self.row_hi[self.ineq_idx]])

        hr, hc = nlp.hessian_coords()
        hkeep = (~self.fixed[hr]) & (~self.fixed[hc])
        self._hess_keep = hkeep
        self._hess_rows_z = self.var_map[hr[hkeep]]
        self._hess_cols_z = self.var_map[hc[hkeep]]

        # KKT coordinate layout (lower triangle): hessian, D diag, A, -gc diag
        n_z, m = self.n_z, self.m
        kr = [self._hess_rows_z, np.arange(n_z),
              n_z + self._jac_rows, n_z + self.ineq_idx,
              n_z + np.arange(m)]
        kc = [self._hess_cols_z, np.arange(n_z),
              self._jac_cols_z, self.slack_of_row[self.ineq_idx],
              np.arange(n_z, n_z + m)]
        krows = np.concatenate(kr)
        kcols = np.concatenate(kc)
        swap = krows < kcols
        self._kkt_rows = np.where(swap, kcols, krows)
        self._kkt_cols = np.where(swap, krows, kcols)
        dim = n_z + m
        if dim < opts.dense_threshold:
            self.kkt = _DenseKkt(dim)
        else:
            self.kkt = _SparseKkt(dim, self._kkt_rows, self._kkt_cols)

        # A with slack columns has fixed structure; cache the pattern
        self._slack_coo = sp.coo_matrix(
            (-np.ones(self.m_ineq),
             (self.ineq_idx, self.slack_of_row[self.ineq_idx])),
            shape=(self.m, self.n_z),
        ).tocsr()

    def x_full(self, zx: np.ndarray) -> np.ndarray:
        x = self.fixed_values.copy()
        x[self.free_idx] = zx
        return x

    # scaled evaluation wrappers -------------------------------------------

    def objective(self, x_full: np.ndarray) -> float:
        return self.obj_scale * self.nlp.objective(x_full)

    def objective_gradient_z(self, x_full: np.ndarray) -> np.ndarray:
        g = np.zeros(self.n_z)
        g[:self.n_free] = self.obj_scale \
            * self.nlp.objective_gradient(x_full)[self.free_idx]
        return g

    def constraints(self, x_full: np.ndarray) -> np.ndarray:
        return self.row_scale * self.nlp.constraints(x_full)

    def jac_values(self, x_full: np.ndarray) -> np.ndarray:
        jr, _, jv = self.nlp.jacobian_coo(x_full)
        return (jv * self.row_scale[jr])[self._jac_keep]

    def hess_values(self, x_full: np.ndarray, lam: np.ndarray) -> np.ndarray:
        return self.nlp.hessian_values(
            x_full, self.obj_scale, lam * self.row_scale)[self._hess_keep]

    def jac_z(self, jac_vals_kept: np.ndarray) -> sp.csr_matrix:
        A = sp.coo_matrix(
            (jac_vals_kept, (self._jac_rows, self._jac_cols_z)),
            shape=(self.m, self.n_z),
        ).tocsr()
        return A + self._slack_coo

    def constraint_residual(self, c_scaled: np.ndarray, z: np.ndarray) -> np.ndarray:
        r = c_scaled - np.where(self.eq_mask, self.row_lo, 0.0)
        r[self.ineq_idx] -= z[self.slack_of_row[self.ineq_idx]]
        return r

    def kkt_values(self, hess_vals, diag_z, jac_vals, gc) -> np.ndarray:
        return np.concatenate([
            hess_vals,
            diag_z,
            jac_vals,
            -np.ones(self.m_ineq),
            -np.full(self.m, gc),
        ])


def _interior_start(ws: _Workspace, opts: SolverOptions) -> np.ndarray:
    nlp = ws.nlp
    z = np.empty(ws.n_z)
    z[:ws.n_free] = nlp.init[ws.free_idx]
    c0 = ws.constraints(ws.x_full(z[:ws.n_free]))
    z[ws.n_free:] = c0[ws.ineq_idx]
    lo, hi = ws.z_lo, ws.z_hi
    span = np.where(np.isfinite(lo) & np.isfinite(hi), hi - lo, 1.0)
    pl = np.where(np.isfinite(lo),
                  lo + np.minimum(opts.bound_push * np.maximum(1.0, np.abs(lo)),
                                  0.5 * span), -INF)
    pu = np.where(np.isfinite(hi),
                  hi - np.minimum(opts.bound_push * np.maximum(1.0, np.abs(hi)),
                                  0.5 * span), INF)
    return np.clip(z, pl, pu)


def _max_step_bounds(z, dz, lo, hi, tau) -> float:
    alpha = 1.0
    down = (dz < 0) & np.isfinite(lo)
    if np.any(down):
        alpha = min(alpha, float(np.min(tau * (z[down] - lo[down]) / -dz[down])))
    up = (dz > 0) & np.isfinite(hi)
    if np.any(up):
        alpha = min(alpha, float(np.min(tau * (hi[up] - z[up]) / dz[up])))
    return alpha


def _max_step_nonneg(v, dv, tau) -> float:
    down = dv < 0
    if not np.any(down):
        return 1.0
    return min(1.0, float(np.min(tau * v[down] / -dv[down])))


def solve(nlp: NlpInstance, opts: SolverOptions | None = None) -> Solution:
    """Run the interior-point iteration on ``nlp`` until KKT tolerance."""
    opts = opts or SolverOptions()
    opts.validate()
    ws = _Workspace(nlp, opts)
    relax = nlp.relax

    # the mu=0 bound-complementarity residual floors at the final barrier
    # value, so the schedule must undershoot the requested tolerance
    mu_floor = min(opts.mu_min, opts.kkt_tol / (opts.kappa_eps + 1.0))
    mu = opts.mu_init
    mu_log = [mu]

    def apply_delta(mu_now: float) -> float | None:
        if relax is None or relax.rows.size == 0:
            return None if relax is None else relax.delta_value(mu_now)
        d = relax.delta_value(mu_now)
        new_hi = d * relax.row_scale * ws.row_scale[relax.rows]
        sl = ws.slack_of_row[relax.rows]
        ws.z_hi[sl] = new_hi
        return d

    delta_now = apply_delta(mu)

    z = _interior_start(ws, opts)
    lo, hi = ws.z_lo, ws.z_hi
    has_lo, has_hi = np.isfinite(lo), np.isfinite(hi)
    gap_lo = lambda zv: np.where(has_lo, zv - lo, 1.0)  # noqa: E731
    gap_hi = lambda zv: np.where(has_hi, hi - zv, 1.0)  # noqa: E731

    lam = np.zeros(ws.m)
    zL = np.where(has_lo, mu / np.maximum(gap_lo(z), 1e-8), 0.0)
    zU = np.where(has_hi, mu / np.maximum(gap_hi(z), 1e-8), 0.0)
    zL = np.clip(zL, 0.0, 1e8)
    zU = np.clip(zU, 0.0, 1e8)

    nu_pen = 1.0
    status = MAX_ITER
    it = 0
    best_feas = INF
    stall = 0
    rescues = 0
    gw_last = 0.0
    log: list[IterationRecord] = []

    def barrier_value(x_full, zv):
        f = ws.objective(x_full)
        b = 0.0
        if np.any(has_lo):
            g = zv[has_lo] - lo[has_lo]
            if np.any(g <= 0):
                return f, INF
            b -= float(np.sum(np.log(g)))
        if np.any(has_hi):
            g = hi[has_hi] - zv[has_hi]
            if np.any(g <= 0):
                return f, INF
            b -= float(np.sum(np.log(g)))
        return f, f + mu * b

    x_full = ws.x_full(z[:ws.n_free])
    e_stat = e_feas = e_comp0 = INF
    while True:
        # one evaluation sweep per iteration
        jacv = ws.jac_values(x_full)
        A = ws.jac_z(jacv)
        c_scaled = ws.constraints(x_full)
        r_pri = ws.constraint_residual(c_scaled, z)

        grad_z = ws.objective_gradient_z(x_full)
        r_dual = grad_z + A.T @ lam - zL + zU
        s_d = max(100.0, (np.abs(lam).sum() + np.abs(zL).sum() + np.abs(zU).sum())
                  / max(1, ws.m + 2 * ws.n_z)) / 100.0
        s_c = max(100.0, (np.abs(zL).sum() + np.abs(zU).sum())
                  / max(1, 2 * ws.n_z)) / 100.0

        def comp_err(mu_v):
            cl = np.where(has_lo, gap_lo(z) * zL - mu_v, 0.0)
            cu = np.where(has_hi, gap_hi(z) * zU - mu_v, 0.0)
            return max(_norm_inf(cl), _norm_inf(cu)) / s_c

        e_stat = _norm_inf(r_dual) / s_d
        e_feas = _norm_inf(r_pri)
        e_comp0 = comp_err(0.0)
        if max(e_stat, e_feas, e_comp0) <= opts.kkt_tol:
            status = OPTIMAL
            break
        if it >= opts.max_iter:
            status = MAX_ITER
            break

        # monotone barrier reduction
        changed = False
        while mu > mu_floor and max(e_stat, e_feas, comp_err(mu)) <= opts.kappa_eps * mu:
            mu = max(mu_floor, mu * opts.mu_shrink)
            mu_log.append(mu)
            changed = True
        if changed:
            delta_now = apply_delta(mu)
            if relax is not None and relax.rows.size:
                sl = ws.slack_of_row[relax.rows]
                room = np.maximum(1e-12, 0.1 * np.maximum(np.abs(ws.z_hi[sl]), 1e-8))
                z[sl] = np.minimum(z[sl], ws.z_hi[sl] - room)
                r_pri = ws.constraint_residual(c_scaled, z)  # slacks moved

        # KKT assembly, factorization, inertia correction
        hess = ws.hess_values(x_full, lam)
        dl = np.where(has_lo, zL / np.maximum(gap_lo(z), 1e-300), 0.0)
        du = np.where(has_hi, zU / np.maximum(gap_hi(z), 1e-300), 0.0)
        diag = dl + du
        gw = 0.0
        gc = opts.dual_reg
        inertia_ok = False
        while True:
            vals = ws.kkt_values(hess, diag + gw, jacv, gc)
            res = ws.kkt.factor(ws._kkt_rows, ws._kkt_cols, vals)
            if res is not None and res[0] == ws.n_z and res[1] == ws.m:
                inertia_ok = True
                break
            if gw == 0.0:
                # warm start near the last level that fixed the inertia
                gw = opts.reg_init if gw_last == 0.0 \
                    else max(opts.reg_init, gw_last * opts.reg_shrink)
            else:
                gw *= opts.reg_grow if gw_last == 0.0 else opts.reg_grow_slow
            if gw > opts.reg_max:
                break
        if not inertia_ok:
            status = SINGULAR_KKT
            break
        gw_last = gw

        grad_phi = grad_z - np.where(has_lo, mu / gap_lo(z), 0.0) \
            + np.where(has_hi, mu / gap_hi(z), 0.0)
        rhs = np.concatenate([-(grad_phi + A.T @ lam), -r_pri])
        step = ws.kkt.solve(rhs)
        if not np.all(np.isfinite(step)):
            status = SINGULAR_KKT
            break
        dz, dlam = step[:ws.n_z], step[ws.n_z:]
        dzL = np.where(has_lo, (mu - gap_lo(z) * zL) / gap_lo(z), 0.0) - dl * dz
        dzU = np.where(has_hi, (mu - gap_hi(z) * zU) / gap_hi(z), 0.0) + du * dz
        dzL = np.where(has_lo, dzL, 0.0)
        dzU = np.where(has_hi, dzU, 0.0)

        tau = opts.fraction_to_boundary
        a_max = _max_step_bounds(z, dz, lo, hi, tau)
        a_dual = min(_max_step_nonneg(zL[has_lo], dzL[has_lo], tau),
                     _max_step_nonneg(zU[has_hi], dzU[has_hi], tau))

        # l1 exact-penalty line search; the penalty weight tracks the current
        # multiplier scale in both directions so early spikes cannot strangle
        # later steps
        _, phi0 = barrier_value(x_full, z)
        err1 = float(np.abs(r_pri).sum())
        ddir = float(grad_phi @ dz)
        need = float(np.abs(lam + dlam).max(initial=0.0)) * 1.01
        if err1 > 1e-14:
            need = max(need, ddir / (0.5 * err1))
        need = min(1e10, need)
        if need > nu_pen:
            nu_pen = 1.2 * need + 1.0
        elif need < 0.25 * nu_pen:
            nu_pen = max(1.0, 2.0 * need)
        merit0 = phi0 + nu_pen * err1
        dmerit = ddir - nu_pen * err1

        alpha = a_max
        accepted = False
        backtracks = 0
        while backtracks <= opts.max_backtracks:
            z_try = z + alpha * dz
            x_try = ws.x_full(z_try[:ws.n_free])
            _, phi_try = barrier_value(x_try, z_try)
            if math.isfinite(phi_try):
                c_try = ws.constraints(x_try)
                if np.all(np.isfinite(c_try)):
                    r_try = ws.constraint_residual(c_try, z_try)
                    merit_try = phi_try + nu_pen * float(np.abs(r_try).sum())
                    if merit_try <= merit0 + 1e-4 * alpha * dmerit:
                        accepted = True
                        break
            alpha *= opts.backtrack_factor
            backtracks += 1
        if not accepted:
            # recenter the bound duals on a slightly re-opened barrier and
            # retry; rescues end-stage stalls at degenerate points
            if rescues < 5:
                rescues += 1
                mu = min(opts.mu_init, mu / opts.mu_shrink)
                mu_log.append(mu)
                delta_now = apply_delta(mu)
                zL = np.where(has_lo, mu / np.maximum(gap_lo(z), 1e-12), 0.0)
                zU = np.where(has_hi, mu / np.maximum(gap_hi(z), 1e-12), 0.0)
                zL = np.clip(zL, 0.0, 1e12)
                zU = np.clip(zU, 0.0, 1e12)
                nu_pen = 1.0
                it += 1
                continue
            status = LINE_SEARCH_FAILURE
            break

        z = z + alpha * dz
        lam = lam + alpha * dlam
        zL = zL + a_dual * dzL
        zU = zU + a_dual * dzU
        # primal-dual safeguard: keep bound duals near mu / gap
        kappa = 1e10
        gl, gu = np.maximum(gap_lo(z), 1e-300), np.maximum(gap_hi(z), 1e-300)
        zL = np.where(has_lo, np.clip(zL, mu / (kappa * gl), kappa * mu / gl), 0.0)
        zU = np.where(has_hi, np.clip(zU, mu / (kappa * gu), kappa * mu / gu), 0.0)

        x_full = ws.x_full(z[:ws.n_free])
        it += 1
        feas_now = _norm_inf(ws.constraint_residual(ws.constraints(x_full), z))
        if feas_now < best_feas - 1e-12:
            best_feas = feas_now
            stall = 0
        else:
            stall += 1
        rec = IterationRecord(it, mu, nlp.objective(x_full), e_stat, e_feas,
                              e_comp0, alpha, a_dual, backtracks)
        log.append(rec)
        if opts.verbose:
            logger.info(rec.format())
        if stall > 50 and mu <= 10 * mu_floor and best_feas > 1e3 * opts.kkt_tol:
            status = INFEASIBLE
            break

    zL_full = np.zeros(nlp.num_vars)
    zU_full = np.zeros(nlp.num_vars)
    zL_full[ws.free_idx] = zL[:ws.n_free] / ws.obj_scale
    zU_full[ws.free_idx] = zU[:ws.n_free] / ws.obj_scale
    return Solution(
        status=status,
        x=x_full,
        row_multipliers=lam * ws.row_scale / ws.obj_scale,
        bound_lower=zL_full,
        bound_upper=zU_full,
        objective=nlp.objective(x_full),
        residuals=KktResiduals(e_stat, e_feas, e_comp0),
        iterations=it,
        mu_log=mu_log,
        iteration_log=log,
        delta_final=delta_now,
    )


def kkt_residuals(nlp: NlpInstance, primal: np.ndarray,
                  row_multipliers: np.ndarray,
                  bound_lower: np.ndarray | None = None,
                  bound_upper: np.ndarray | None = None) -> KktResiduals:
    """Unscaled KKT residual norms at an arbitrary primal-dual point.

    Pure function of its inputs; fixed (equal-bound) variables are excluded
    from the stationarity norm since their multipliers are not represented.
    """
    x = np.asarray(primal, dtype=np.float64)
    lam = np.asarray(row_multipliers, dtype=np.float64)
    zL = np.zeros(nlp.num_vars) if bound_lower is None else np.asarray(bound_lower)
    zU = np.zeros(nlp.num_vars) if bound_upper is None else np.asarray(bound_upper)
    g = nlp.objective_gradient(x)
    J = nlp.jacobian(x)
    stat_vec = g + J.T @ lam - zL + zU
    free = nlp.lower != nlp.upper
    stat = _norm_inf(stat_vec[free])
    lo, hi = nlp.row_bounds()
    c = nlp.constraints(x)
    viol = np.maximum(np.maximum(lo - c, c - hi), 0.0)
    bviol = np.maximum(np.maximum(nlp.lower - x, x - nlp.upper), 0.0)
    feas = max(_norm_inf(viol[np.isfinite(viol)]), _norm_inf(bviol[np.isfinite(bviol)]))
    comp_l = np.zeros(nlp.num_vars)
    comp_u = np.zeros(nlp.num_vars)
    mask_l = np.isfinite(nlp.lower) & free
    mask_u = np.isfinite(nlp.upper) & free
    comp_l[mask_l] = (x[mask_l] - nlp.lower[mask_l]) * zL[mask_l]
    comp_u[mask_u] = (nlp.upper[mask_u] - x[mask_u]) * zU[mask_u]
    return KktResiduals(stat, feas, max(_norm_inf(comp_l), _norm_inf(comp_u)))
