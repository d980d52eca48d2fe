import math

import numpy as np
import pytest

from mpcctraj import autodiff as ad
from mpcctraj import collocation as co
from mpcctraj import ipm, systems
from mpcctraj.nlp import INF, NlpInstance


def quadratic_bound_problem():
    """min (x - 1)^2 s.t. x >= 0; interior unconstrained minimum."""
    nlp = NlpInstance(0)
    nlp.append_variables(1, lo=0.0, hi=INF, init=0.3)
    tape = ad.record(lambda v: (v[0] - 1.0) ** 2, 1, 1)
    nlp.add_objective_term("obj", tape, cols=[[0]], weight=[1.0])
    return nlp


def linear_complementarity_problem(delta=1e-6):
    """min x1 + x2 s.t. x >= 0, 0 <= x1 perp x2 >= 0 relaxed per-point."""
    from mpcctraj import mpcc
    from mpcctraj.nlp import PointPair

    nlp = NlpInstance(0)
    nlp.append_variables(2, lo=0.0, init=[0.5, 0.5])
    obj = ad.record(lambda v: v[0] + v[1], 2, 1)
    nlp.add_objective_term("obj", obj, cols=[[0, 1]], weight=[1.0])
    nlp.pending_pairs.append(PointPair(0, 0.0, 1, 1, 0.0, 1, 0))
    mpcc.reformulate(nlp, mpcc.RelaxationPolicy(mode=mpcc.PER_POINT, delta=delta))
    return nlp


def branch_benchmark(delta=1e-6):
    from mpcctraj import mpcc
    from mpcctraj.nlp import PointPair

    nlp = NlpInstance(0)
    nlp.append_variables(2, lo=0.0, init=[0.6, 0.4])
    obj = ad.record(lambda v: (v[0] - 1.0) ** 2 + (v[1] - 1.0) ** 2, 2, 1)
    nlp.add_objective_term("obj", obj, cols=[[0, 1]], weight=[1.0])
    nlp.pending_pairs.append(PointPair(0, 0.0, 1, 1, 0.0, 1, 0))
    mpcc.reformulate(nlp, mpcc.RelaxationPolicy(mode=mpcc.PER_POINT, delta=delta))
    return nlp


class TestSolveBasics:
    def test_interior_minimum(self):
        sol = ipm.solve(quadratic_bound_problem())
        assert sol.is_optimal
        assert sol.x[0] == pytest.approx(1.0, abs=1e-7)
        assert sol.objective == pytest.approx(0.0, abs=1e-9)

    def test_origin_optimum_under_relaxed_pair(self):
        sol = ipm.solve(linear_complementarity_problem())
        assert sol.is_optimal
        assert sol.objective <= 1e-3
        assert np.all(np.abs(sol.x) <= 1e-3)

    def test_branch_benchmark_objective(self):
        sol = ipm.solve(branch_benchmark())
        assert sol.is_optimal
        assert sol.objective == pytest.approx(1.0, abs=1e-3)
        # lands on one of the two analytic branch optima
        assert min(abs(sol.x[0] - 1.0), abs(sol.x[1] - 1.0)) <= 1e-3

    def test_status_optimal_means_small_residuals(self):
        sol = ipm.solve(branch_benchmark())
        assert sol.is_optimal
        assert sol.residuals.worst() <= 1e-8

    def test_bounds_hold_at_solution(self):
        sol = ipm.solve(linear_complementarity_problem())
        assert np.all(sol.x >= -1e-9)

    def test_max_iter_status(self):
        sol = ipm.solve(branch_benchmark(), ipm.SolverOptions(max_iter=2))
        assert sol.status == ipm.MAX_ITER
        assert sol.iterations == 2


class TestDeterminism:
    def test_identical_iterate_sequences(self):
        a = ipm.solve(branch_benchmark())
        b = ipm.solve(branch_benchmark())
        assert a.x.tobytes() == b.x.tobytes()
        assert a.iterations == b.iterations
        log_a = [rec.format() for rec in a.iteration_log]
        log_b = [rec.format() for rec in b.iteration_log]
        assert log_a == log_b

    def test_mu_log_monotone_after_start(self):
        sol = ipm.solve(branch_benchmark())
        mus = sol.mu_log
        assert mus[0] == pytest.approx(0.1)


class TestInteriority:
    def test_iterates_strictly_inside_bounds(self):
        # instrumented run: every accepted iterate stays interior
        nlp = linear_complementarity_problem()
        recorded = []
        orig = ipm._Workspace.x_full

        def spy(self, zx):
            recorded.append(zx.copy())
            return orig(self, zx)

        ipm._Workspace.x_full = spy
        try:
            ipm.solve(nlp)
        finally:
            ipm._Workspace.x_full = orig
        for zx in recorded:
            assert np.all(zx > 0.0)


class TestKktResiduals:
    def test_unconstrained_minimizer_stationary(self):
        nlp = quadratic_bound_problem()
        res = ipm.kkt_residuals(nlp, np.array([1.0]), np.zeros(0))
        assert res.stationarity == pytest.approx(0.0, abs=1e-14)

    def test_feasible_point_zero_primal_residual(self):
        nlp = linear_complementarity_problem(delta=1.0)
        res = ipm.kkt_residuals(nlp, np.array([0.5, 0.5]), np.zeros(1))
        assert res.feasibility == pytest.approx(0.0, abs=1e-14)

    def test_matches_dense_recomputation_on_pendulum_nlp(self):
        prob = systems.make_example("pendulum", n_elements=4)
        nlp = co.transcribe(prob, co.RootScheme("radau", 2))
        rng = np.random.default_rng(0)
        x = nlp.init + 0.1 * rng.standard_normal(nlp.num_vars)
        lam = rng.standard_normal(nlp.num_rows)
        zl = np.abs(rng.standard_normal(nlp.num_vars))
        zu = np.abs(rng.standard_normal(nlp.num_vars))
        got = ipm.kkt_residuals(nlp, x, lam, zl, zu)

        # independent dense recomputation: per-row gradients assembled one
        # at a time through single-output reverse sweeps
        g = nlp.objective_gradient(x)
        J = np.zeros((nlp.num_rows, nlp.num_vars))
        for blk in nlp.blocks:
            from mpcctraj.nlp import LinearBlock

            if isinstance(blk, LinearBlock):
                J[blk.row0:blk.row0 + blk.n_rows, :blk.matrix.shape[1]] \
                    += blk.matrix.toarray()
            else:
                for r, c, v in blk.jac_entries(x):
                    for rr, cc, vv in zip(r, c, v):
                        J[rr, cc] += vv
        stat_vec = g + J.T @ lam - zl + zu
        free = nlp.lower != nlp.upper
        want_stat = np.abs(stat_vec[free]).max()
        assert got.stationarity == pytest.approx(want_stat, rel=1e-12)

        lo, hi = nlp.row_bounds()
        c = nlp.constraints(x)
        viol = np.maximum(np.maximum(lo - c, c - hi), 0.0)
        bviol = np.maximum(np.maximum(nlp.lower - x, x - nlp.upper), 0.0)
        want_feas = max(viol.max(), bviol[np.isfinite(bviol)].max())
        assert got.feasibility == pytest.approx(want_feas, rel=1e-12)


class TestDeltaLink:
    def _benchmark(self, mode, delta):
        from mpcctraj import mpcc
        from mpcctraj.nlp import PointPair

        nlp = NlpInstance(0)
        nlp.append_variables(2, lo=0.0, init=[0.6, 0.4])
        obj = ad.record(lambda v: (v[0] - 1.0) ** 2 + (v[1] - 1.0) ** 2, 2, 1)
        nlp.add_objective_term("obj", obj, cols=[[0, 1]], weight=[1.0])
        nlp.pending_pairs.append(PointPair(0, 0.0, 1, 1, 0.0, 1, 0))
        mpcc.reformulate(nlp, mpcc.RelaxationPolicy(mode=mode, delta=delta))
        return nlp

    def test_barrier_linked_delta_shrinks_with_mu(self):
        nlp = self._benchmark("per-mu", 0.1)
        sol = ipm.solve(nlp)
        assert sol.is_optimal
        assert sol.delta_final <= 1e-8 + 1e-12
        assert sol.x[0] * sol.x[1] <= sol.delta_final + 1e-9

    def test_fixed_delta_reported(self):
        nlp = self._benchmark("per", 1e-4)
        sol = ipm.solve(nlp)
        assert sol.is_optimal
        assert sol.delta_final == pytest.approx(1e-4)


def test_transcribed_feasibility_converges_fast():
    # flat initial guess x = 1 on the decay problem
    from mpcctraj.problem import ProblemDefinition, ProblemInfo, validate_problem

    info = ProblemInfo(1, 0, 0, n_elements=10, t0=0.0, tf=1.0)
    prob = validate_problem(ProblemDefinition(
        info=info, x0=[1.0],
        dynamics=lambda xd, x, y, u, p, t: [xd[0] + x[0]],
        initial_guess=lambda t: ([1.0], [0.0], [], []),
    ))
    nlp = co.transcribe(prob, co.RootScheme("radau", 2))
    sol = ipm.solve(nlp)
    assert sol.is_optimal
    assert sol.iterations <= 30
    assert sol.x[nlp.var_index.xf][0] == pytest.approx(math.exp(-1.0), abs=1e-5)
