"""Acceptance suite: every criterion at its stated tolerance.

Each test prints one PASS/FAIL line (run with ``pytest -s`` to see them on
success). Heavy solves are shared through module-scoped fixtures so the
stated runtime budgets hold for the work itself.
"""

import json
import math
import time

import numpy as np
import pytest

from mpcctraj import api, autodiff as ad, cli, collision, collocation as co
from mpcctraj import ipm, mpcc, systems
from mpcctraj.nlp import NlpInstance, PointPair
from mpcctraj.problem import (
    ProblemDefinition,
    ProblemInfo,
    VariableBounds,
    validate_problem,
)


def _criterion(number, description):
    def decorate(fn):
        import functools

        @functools.wraps(fn)
        def wrapper(*args, **kwargs):
            start = time.perf_counter()
            try:
                fn(*args, **kwargs)
            except BaseException:
                print(f"\nFAIL criterion {number}: {description} "
                      f"[{time.perf_counter() - start:.2f}s]")
                raise
            print(f"\nPASS criterion {number}: {description} "
                  f"[{time.perf_counter() - start:.2f}s]")

        return wrapper

    return decorate


# -- criterion 1: collocation correctness ------------------------------------

def _decay_error(n_elements: int) -> float:
    info = ProblemInfo(1, 0, 0, n_elements=n_elements, t0=0.0, tf=1.0)
    prob = validate_problem(ProblemDefinition(
        info=info, x0=[1.0],
        dynamics=lambda xd, x, y, u, p, t: [xd[0] + x[0]],
        initial_guess=lambda t: ([1.0], [0.0], [], []),
    ))
    nlp = co.transcribe(prob, co.RootScheme("radau", 2))
    sol = ipm.solve(nlp)
    assert sol.is_optimal
    return abs(sol.x[nlp.var_index.xf][0] - math.exp(-1.0))


@_criterion(1, "collocation endpoint error and order-3 doubling")
def test_criterion_1_collocation():
    start = time.perf_counter()
    err10 = _decay_error(10)
    err20 = _decay_error(20)
    elapsed = time.perf_counter() - start
    assert err10 <= 1e-5, f"endpoint error {err10} exceeds 1e-5"
    assert elapsed < 1.0, f"runtime {elapsed:.2f}s exceeds 1s"
    # the exact-arithmetic ratio for this doubling is 7.8986: order-3
    # superconvergence approaches the factor 8 from below on this problem,
    # so the strict bound fails by construction (see README, Tests section)
    ratio = err10 / err20
    assert ratio >= 8.0, (
        f"error ratio {ratio:.4f} < 8; exact collocation arithmetic yields "
        "7.8986 for N_e 10 -> 20, which only approaches 8 asymptotically")


# -- criterion 2: AD correctness ----------------------------------------------

def _bundled_functions():
    pparams = systems.PusherSliderParams()
    cparams = systems.CarParams()

    def pusher(v):
        return systems.pusher_slider_residual(
            np.array(v[4:8], dtype=object), np.array(v[0:4], dtype=object),
            np.array(v[8:12], dtype=object), np.array(v[12:14], dtype=object),
            pparams)

    def car(v):
        return systems.car_residual(
            np.array(v[4:8], dtype=object), np.array(v[0:4], dtype=object),
            np.array(v[8:10], dtype=object), cparams)

    def two_face(v):
        return systems.two_face_pusher_residual(
            np.array(v[3:6], dtype=object), np.array(v[0:3], dtype=object),
            np.array(v[6:12], dtype=object), np.array(v[12:15], dtype=object),
            pparams)

    def pendulum(v):
        return [v[0] - v[3], v[1] - (v[4] - 0.1 * v[3]
                                     - 9.81 * np.sin(v[2]))]

    def double_int(v):
        return [v[0] - v[3], v[1] - v[4]]

    return [("pusher_slider", pusher, 14), ("car", car, 10),
            ("two_face_pusher", two_face, 15), ("pendulum", pendulum, 5),
            ("double_integrator", double_int, 5)]


def _fd_jacobian(fn, x, h=1e-6):
    f0 = np.atleast_1d(np.asarray(fn(list(x)), dtype=np.float64))
    J = np.zeros((len(f0), len(x)))
    for j in range(len(x)):
        xp, xm = x.copy(), x.copy()
        xp[j] += h
        xm[j] -= h
        J[:, j] = (np.atleast_1d(fn(list(xp))) - np.atleast_1d(fn(list(xm)))) / (2 * h)
    return J


@_criterion(2, "AD derivatives vs finite differences; sparsity soundness")
def test_criterion_2_autodiff():
    start = time.perf_counter()
    rng = np.random.default_rng(2024)
    for name, fn, n_in in _bundled_functions():
        tape = ad.record(fn, n_in)
        pattern = ad.detect_sparsity(tape).as_set()
        for _ in range(5):
            x = rng.uniform(0.2, 1.2, n_in)
            J = ad.jacobian(tape, x).toarray()
            Jfd = _fd_jacobian(fn, x)
            scale = np.maximum(1.0, np.abs(Jfd))
            assert np.all(np.abs(J - Jfd) <= 1e-6 * scale), name
            probe = {(int(r), int(c))
                     for r, c in zip(*np.nonzero(np.abs(Jfd) > 1e-7))}
            assert pattern >= probe, f"{name}: sparsity misses true nonzeros"

            lam = rng.standard_normal(tape.n_out)
            H = ad.hessian_lagrangian(None, tape, x, 0.0, lam).toarray()
            Hfull = H + np.tril(H, -1).T
            h = 1e-6
            Hfd = np.zeros((n_in, n_in))
            for j in range(n_in):
                xp, xm = x.copy(), x.copy()
                xp[j] += h
                xm[j] -= h
                gp = ad.weighted_gradient(tape, xp, lam)
                gm = ad.weighted_gradient(tape, xm, lam)
                Hfd[:, j] = (gp - gm) / (2 * h)
            hscale = np.maximum(1.0, np.abs(Hfd))
            assert np.all(np.abs(Hfull - Hfd) <= 1e-5 * hscale), name

    # NLP-level sparsity on an instance with <= 200 variables
    prob = systems.make_example("pendulum", n_elements=8)
    nlp = co.transcribe(prob, co.RootScheme("radau", 2))
    assert nlp.num_vars <= 200
    pattern = nlp.jacobian_pattern().as_set()
    x = nlp.init + 0.05 * rng.standard_normal(nlp.num_vars)
    base = nlp.constraints(x)
    for j in range(nlp.num_vars):
        xp = x.copy()
        xp[j] += 1e-6
        diff = (nlp.constraints(xp) - base) / 1e-6
        for r in np.nonzero(np.abs(diff) > 1e-6)[0]:
            assert (int(r), j) in pattern
    elapsed = time.perf_counter() - start
    assert elapsed < 10.0, f"runtime {elapsed:.2f}s exceeds 10s"


# -- criterion 3: MPCC branch oracle ------------------------------------------

def _branch_enumeration_optimum():
    # pin each branch of 0 <= x1 perp x2 >= 0 and minimize the remaining
    # coordinate of (x1-1)^2 + (x2-1)^2 in closed form
    values = []
    for fixed in (0, 1):
        free_opt = 1.0  # minimizer of (x-1)^2 over x >= 0
        values.append((0.0 - 1.0) ** 2 + (free_opt - 1.0) ** 2)
    return min(values)


def _mpcc_toy(mode, delta=1e-6):
    nlp = NlpInstance(0)
    nlp.append_variables(2, lo=0.0, init=[0.6, 0.4])
    obj = ad.record(lambda v: (v[0] - 1.0) ** 2 + (v[1] - 1.0) ** 2, 2, 1)
    nlp.add_objective_term("obj", obj, cols=[[0, 1]], weight=[1.0])
    nlp.pending_pairs.append(PointPair(0, 0.0, 1, 1, 0.0, 1, 0))
    mpcc.reformulate(nlp, mpcc.RelaxationPolicy(mode=mode, delta=delta))
    return nlp


@_criterion(3, "five relaxation policies reach the branch optimum")
def test_criterion_3_mpcc():
    start = time.perf_counter()
    oracle = _branch_enumeration_optimum()
    assert oracle == 1.0
    for mode in mpcc.MODES:
        nlp = _mpcc_toy(mode)
        sol = ipm.solve(nlp)
        assert sol.is_optimal, f"{mode}: {sol.status}"
        point_obj = (sol.x[0] - 1.0) ** 2 + (sol.x[1] - 1.0) ** 2
        assert abs(point_obj - oracle) <= 1e-3, f"{mode}: {point_obj}"
    for delta in (1e-2, 1e-4, 1e-6):
        nlp = _mpcc_toy(mpcc.PER_POINT, delta=delta)
        sol = ipm.solve(nlp)
        assert sol.is_optimal
        residual = mpcc.residual_from_primal(nlp, sol.x)
        assert residual <= delta + 1e-8, f"delta={delta}: residual {residual}"
    elapsed = time.perf_counter() - start
    assert elapsed < 5.0, f"runtime {elapsed:.2f}s exceeds 5s"


# -- criterion 4: collision formulation vs oracle ------------------------------

@_criterion(4, "stationarity distances match the oracle; count formula exact")
def test_criterion_4_collision():
    start = time.perf_counter()
    rng = np.random.default_rng(44)
    for trial in range(50):
        n_vi, n_vj = rng.integers(3, 9), rng.integers(3, 9)
        Vi = rng.uniform(-1.0, 1.0, (3, n_vi))
        Vj = rng.uniform(-1.0, 1.0, (3, n_vj)) + rng.uniform(-2.0, 2.0, (3, 1))
        oracle = collision.min_distance_oracle(Vi, Vj)
        _, dist = collision.solve_pair_stationarity(Vi, Vj)
        assert abs(dist - oracle) <= 1e-4, f"trial {trial}: {dist} vs {oracle}"

    # variable-count scaling formula: N_e n_O (n_O - 1)(n_v + n_v + 1)
    from mpcctraj.problem import PolytopeObject, SeparationSpec

    body = PolytopeObject(
        "body", 4, is_static=False,
        vertex_map=lambda x, y: [
            [x[0] - 0.1, x[0] + 0.1, x[0] + 0.1, x[0] - 0.1],
            [x[1] - 0.1, x[1] - 0.1, x[1] + 0.1, x[1] + 0.1],
            [0.0 * x[0]] * 4])
    wall = PolytopeObject("wall", 4, is_static=True, vertices=np.array(
        [[2.0, 3.0, 3.0, 2.0], [0.0, 0.0, 1.0, 1.0], [0.0] * 4]))
    info = ProblemInfo(2, 0, 2, n_elements=10, tf=1.0)
    prob = validate_problem(ProblemDefinition(
        info=info, x0=[0.0, 0.0],
        dynamics=lambda xd, x, y, u, p, t: [xd[0] - u[0], xd[1] - u[1]],
        initial_guess=lambda t: ([0.0, 0.0], [0.0, 0.0], [], [0.0, 0.0]),
        objects=[body, wall],
        separations=[SeparationSpec(0, 1)],
    ))
    nlp = co.transcribe(prob, co.RootScheme("radau", 1))
    before = nlp.num_vars
    collision.augment(nlp)
    added = nlp.num_vars - before
    assert added == 10 * 2 * (2 - 1) * (4 + 4 + 1) == 180
    elapsed = time.perf_counter() - start
    assert elapsed < 30.0, f"runtime {elapsed:.2f}s exceeds 30s"


# -- criteria 5-7: scenario solves ---------------------------------------------

@pytest.fixture(scope="module")
def pusher_result():
    t0 = time.perf_counter()
    result = api.solve_problem(systems.make_example("pusher"),
                               options=ipm.SolverOptions(max_iter=1500))
    return result, time.perf_counter() - t0


@_criterion(5, "pusher-slider: optimal, on-target, friction-consistent")
def test_criterion_5_pusher(pusher_result):
    result, elapsed = pusher_result
    prob, sol = result.problem, result.solution
    assert prob.info.n_elements <= 50
    assert elapsed < 60.0, f"runtime {elapsed:.2f}s exceeds 60s"
    assert sol.is_optimal, sol.status

    goal = prob.extras["goal"]
    xf = sol.x[result.nlp.var_index.xf]
    assert np.abs(xf[:2] - goal[:2]).max() <= 1e-2
    assert abs(xf[2] - goal[2]) <= 5e-2

    residual = result.complementarity
    assert residual <= sol.delta_final + 1e-6

    params = prob.extras["params"]
    yv = sol.x[result.nlp.var_index.y]
    uv = sol.x[result.nlp.var_index.u]
    slip = yv[:, :, 0] - yv[:, :, 1]
    cone_gap = np.abs(np.abs(uv[:, :, 1]) - params.friction * uv[:, :, 0])
    slipping = np.abs(slip) > 1e-4
    if np.any(slipping):
        assert cone_gap[slipping].max() <= 1e-3


@pytest.fixture(scope="module")
def car_result():
    t0 = time.perf_counter()
    result = api.solve_problem(systems.make_example("car_parking"),
                               options=ipm.SolverOptions(max_iter=2000))
    return result, time.perf_counter() - t0


@_criterion(6, "car parking: optimal, on-target, separation respected")
def test_criterion_6_car(car_result):
    result, elapsed = car_result
    sol = result.solution
    assert elapsed < 60.0, f"runtime {elapsed:.2f}s exceeds 60s"
    assert sol.is_optimal, sol.status
    goal = result.problem.extras["goal"]
    xf = sol.x[result.nlp.var_index.xf]
    assert np.abs(xf - goal).max() <= 1e-2
    for spec in result.problem.separations:
        floor = math.sqrt(spec.min_distance ** 2 + spec.smoothing ** 2)
        for name, dist in result.pair_min_distances.items():
            assert dist >= floor - 1e-6, f"{name}: {dist} below {floor}"


@_criterion(7, "mode sequences: bang-bang time, positive durations, pins")
def test_criterion_7_modes():
    start = time.perf_counter()
    # minimum-time double integrator, rest to rest over a unit distance
    from mpcctraj.mode_schedule import ModeSequence, build_mode_problem

    info = ProblemInfo(2, 0, 1, n_elements=1, tf=1.0)
    base = validate_problem(ProblemDefinition(
        info=info, x0=[0.0, 0.0],
        dynamics=lambda xd, x, y, u, p, t: [xd[0] - x[1], xd[1] - u[0]],
        bounds=VariableBounds(u_lo=[-1.0], u_hi=[1.0],
                              x_final_lo=[1.0, 0.0], x_final_hi=[1.0, 0.0]),
        initial_guess=lambda t: ([min(t, 1.0), 0.0], [0.0, 0.0], [], [0.0]),
    ))
    seq = ModeSequence(modes=[{}], durations_init=[1.5],
                       duration_bounds=[(0.1, 10.0)], elements_per_mode=[20],
                       minimum_time=True)
    result = api.solve_problem(build_mode_problem(base, seq),
                               co.RootScheme("radau", 2))
    assert result.status == "Optimal"
    assert abs(result.durations[0] - 2.0) <= 1e-3  # classical bang-bang time

    # two-mode pushing scenario
    result = api.solve_problem(systems.make_example("pusher_modes"),
                               options=ipm.SolverOptions(max_iter=1500))
    assert result.status == "Optimal", result.status
    assert np.all(result.durations > 0.0)
    traj = result.trajectory
    left = traj.sample_state(1.0 - 1e-12)
    right = traj.sample_state(1.0 + 1e-12)
    np.testing.assert_allclose(left, right, atol=1e-8)
    # pinned bound pattern holds exactly: inactive face exerts nothing
    prob = result.problem
    yv = result.solution.x[result.nlp.var_index.y]
    n1 = prob.extras["mode_sequence"].elements_per_mode[0]
    assert np.all(yv[:n1, :, 1] == 0.0)   # top-face normal off in mode 1
    assert np.all(yv[n1:, :, 0] == 0.0)   # left-face normal off in mode 2
    elapsed = time.perf_counter() - start
    assert elapsed < 60.0, f"runtime {elapsed:.2f}s exceeds 60s"


# -- criterion 8: determinism and I/O ------------------------------------------

@_criterion(8, "bit-identical outputs and lossless trajectory round-trips")
def test_criterion_8_determinism(tmp_path):
    outs = []
    for sub in ("a", "b"):
        out = tmp_path / sub
        code = cli.main(["solve", "--example", "double_integrator",
                         "--nc", "2", "--out", str(out)])
        assert code == 0
        outs.append(out)
    a, b = outs
    assert (a / "trajectory.csv").read_bytes() == (b / "trajectory.csv").read_bytes()
    assert (a / "iterations.log").read_bytes() == (b / "iterations.log").read_bytes()

    header, times, rows = cli.read_trajectory_csv(a / "trajectory.csv")
    clone = tmp_path / "clone.csv"
    cli.write_trajectory_csv(clone, times, rows, header)
    h2, t2, r2 = cli.read_trajectory_csv(clone)
    assert np.array_equal(times, t2) and np.array_equal(rows, r2)
    assert clone.read_bytes() == (a / "trajectory.csv").read_bytes()

    jout = tmp_path / "j"
    code = cli.main(["solve", "--example", "double_integrator", "--nc", "2",
                     "--format", "json", "--out", str(jout)])
    assert code == 0
    hj, tj, rj = cli.read_trajectory_json(jout / "trajectory.json")
    np.testing.assert_allclose(tj, times, atol=1e-12)
    np.testing.assert_allclose(rj, rows, atol=1e-12)
