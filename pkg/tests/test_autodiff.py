import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mpcctraj import autodiff as ad
from mpcctraj.errors import UnsupportedPrimitive


def central_jacobian(fn, x, h=1e-6):
    x = np.asarray(x, dtype=np.float64)
    f0 = np.atleast_1d(fn(list(x)))
    J = np.zeros((len(f0), len(x)))
    for j in range(len(x)):
        xp, xm = x.copy(), x.copy()
        xp[j] += h
        xm[j] -= h
        J[:, j] = (np.atleast_1d(fn(list(xp))) - np.atleast_1d(fn(list(xm)))) / (2 * h)
    return J


def test_record_replay_square():
    tape = ad.record(lambda v: v[0] * v[0], 1, 1)
    assert ad.replay(tape, [3.0])[0] == 9.0


def test_record_two_outputs():
    tape = ad.record(lambda v: [v[0] * v[0], v[1]], 2, 2)
    assert tape.n_out == 2
    np.testing.assert_allclose(ad.replay(tape, [2.0, 5.0]), [4.0, 5.0])


def test_record_flags_branching():
    def branchy(v):
        if v[0] > 0:
            return v[0]
        return -v[0]

    with pytest.raises(UnsupportedPrimitive):
        ad.record(branchy, 1, 1)


def test_record_rejects_wrong_arity():
    with pytest.raises(UnsupportedPrimitive):
        ad.record(lambda v: [v[0], v[0]], 1, 1)


def test_replay_matches_direct_at_random_points():
    def fn(v):
        return [np.sin(v[0] * v[1]) + np.exp(v[2] / 3.0),
                ad.sqrt(v[2] * v[2] + 1.0) - v[0] ** 3]

    tape = ad.record(fn, 3, 2)
    rng = np.random.default_rng(5)
    for _ in range(10):
        x = rng.uniform(0.2, 1.8, 3)
        want = np.asarray(fn(list(x)))
        got = ad.replay(tape, x)
        np.testing.assert_allclose(got, want, rtol=1e-14)


def test_gradient_simple_power():
    tape = ad.record(lambda v: v[0] * v[0], 1, 1)
    assert ad.gradient(tape, [3.0])[0] == pytest.approx(6.0)


def test_gradient_hand_chain_rule():
    # d/dx sin(x1 x2) = (x2 cos, x1 cos); at (1, pi) -> (-pi, -1)
    tape = ad.record(lambda v: np.sin(v[0] * v[1]), 2, 1)
    g = ad.gradient(tape, [1.0, np.pi])
    np.testing.assert_allclose(g, [-np.pi, -1.0], atol=1e-12)


def test_jacobian_sparsity_separable():
    tape = ad.record(lambda v: [v[0] * v[0], v[1]], 2, 2)
    assert ad.detect_sparsity(tape).as_set() == {(0, 0), (1, 1)}


def test_constant_function_empty_pattern():
    tape = ad.record(lambda v: 4.2, 1, 1)
    assert ad.detect_sparsity(tape).nnz == 0


def test_jacobian_matches_finite_differences():
    def fn(v):
        return [v[0] * v[1] + np.cos(v[2]),
                v[2] / (1.0 + v[0] * v[0]),
                np.exp(v[1]) * np.tan(v[0] / 4.0)]

    tape = ad.record(fn, 3, 3)
    rng = np.random.default_rng(11)
    for _ in range(5):
        x = rng.uniform(0.3, 1.5, 3)
        J = ad.jacobian(tape, x).toarray()
        Jfd = central_jacobian(fn, x)
        np.testing.assert_allclose(J, Jfd, rtol=1e-6, atol=1e-8)


def test_hessian_single_variable():
    tape = ad.record(lambda v: v[0] * v[0], 1, 1)
    H = ad.hessian_lagrangian(tape, None, np.array([1.3]), 1.0, []).toarray()
    np.testing.assert_allclose(H, [[2.0]])


def test_hessian_bilinear_constraint():
    con = ad.record(lambda v: v[0] * v[1], 2, 1)
    H = ad.hessian_lagrangian(None, con, np.array([2.0, 3.0]), 0.0, [1.0]).toarray()
    # lower triangle of [[0, 1], [1, 0]]
    np.testing.assert_allclose(H, [[0.0, 0.0], [1.0, 0.0]])


def test_hessian_random_quadratic():
    rng = np.random.default_rng(3)
    Q = rng.standard_normal((5, 5))
    Q = 0.5 * (Q + Q.T)

    def quad(v):
        total = 0.0
        for i in range(5):
            for j in range(5):
                total = total + 0.5 * Q[i, j] * v[i] * v[j]
        return total

    tape = ad.record(quad, 5, 1)
    x = rng.standard_normal(5)
    H = ad.hessian_lagrangian(tape, None, x, 1.0, []).toarray()
    Hfull = H + np.tril(H, -1).T
    np.testing.assert_allclose(Hfull, Q, atol=1e-10)


def test_hessian_matches_fd_of_gradient():
    def fn(v):
        return np.sin(v[0]) * v[1] + np.exp(v[0] * v[1] / 4.0)

    tape = ad.record(fn, 2, 1)
    x = np.array([0.7, 1.2])
    H = ad.hessian_lagrangian(tape, None, x, 1.0, []).toarray()
    Hfull = H + np.tril(H, -1).T
    h = 1e-6
    Hfd = np.zeros((2, 2))
    for j in range(2):
        xp, xm = x.copy(), x.copy()
        xp[j] += h
        xm[j] -= h
        Hfd[:, j] = (ad.gradient(tape, xp) - ad.gradient(tape, xm)) / (2 * h)
    np.testing.assert_allclose(Hfull, Hfd, atol=1e-5)


def test_sparsity_superset_of_dense_probe():
    def fn(v):
        return [v[0] * v[2] + 1.0, v[1], np.sin(v[3]) * v[0]]

    tape = ad.record(fn, 4, 3)
    pattern = ad.detect_sparsity(tape)
    rng = np.random.default_rng(17)
    for _ in range(10):
        x = rng.uniform(0.2, 1.4, 4)
        J = central_jacobian(fn, x)
        true_nonzeros = {(int(r), int(c)) for r, c in zip(*np.nonzero(np.abs(J) > 1e-9))}
        assert pattern.as_set() >= true_nonzeros


def test_tape_replay_deterministic():
    tape = ad.record(lambda v: [np.sin(v[0]) * np.exp(v[1]), v[0] / v[1]], 2, 2)
    x = np.array([0.4, 1.7])
    a = ad.replay(tape, x)
    b = ad.replay(tape, x)
    assert a.tobytes() == b.tobytes()


def test_batched_replay_matches_scalar():
    tape = ad.record(lambda v: [v[0] * np.cos(v[1]), v[1] ** 2], 2, 2)
    rng = np.random.default_rng(23)
    X = rng.uniform(0.1, 2.0, (2, 7))
    batch = ad.replay(tape, X)
    for lane in range(7):
        np.testing.assert_allclose(batch[:, lane], ad.replay(tape, X[:, lane]))


def test_weighted_hessian_action_batched():
    tape = ad.record(lambda v: np.sin(v[0] * v[1]), 2, 1)
    rng = np.random.default_rng(29)
    X = rng.uniform(0.2, 1.5, (2, 4))
    H = ad.weighted_hessian_action(tape, X, np.ones((1, 4)), np.eye(2))
    for lane in range(4):
        x = X[:, lane]
        s, c = np.sin(x[0] * x[1]), np.cos(x[0] * x[1])
        Hlane = np.array([
            [-s * x[1] ** 2, c - s * x[0] * x[1]],
            [c - s * x[0] * x[1], -s * x[0] ** 2]])
        np.testing.assert_allclose(H[:, :, lane], Hlane, atol=1e-12)


def test_smooth_guards():
    tape = ad.record(lambda v: ad.smooth_max(v[0], v[1], 1e-9), 2, 1)
    assert ad.replay(tape, [1.0, 3.0])[0] == pytest.approx(3.0, abs=1e-6)
    tape2 = ad.record(lambda v: ad.smooth_abs(v[0], 1e-9), 1, 1)
    assert ad.replay(tape2, [-2.5])[0] == pytest.approx(2.5, abs=1e-6)


def test_nonfinite_detection():
    tape = ad.record(lambda v: ad.log(v[0]), 1, 1)
    with pytest.raises(Exception):
        ad.gradient(tape, [0.0])


@pytest.mark.parametrize("fn,n_in", [
    (lambda v: v[0] + v[1] - v[0] * v[1], 2),
    (lambda v: v[0] / v[1], 2),
    (lambda v: -v[0] ** 3 + v[1] ** 0.5, 2),
    (lambda v: ad.exp(v[0]) * ad.log(v[1]), 2),
    (lambda v: ad.sin(v[0]) + ad.cos(v[1]) + ad.tan(v[0] * v[1] / 5.0), 2),
    (lambda v: ad.sqrt(v[0] * v[0] + v[1]), 2),
    (lambda v: 2.0 ** v[0], 1),
    (lambda v: v[0] ** v[1], 2),
])
def test_second_order_every_primitive(fn, n_in):
    tape = ad.record(fn, n_in, 1)
    rng = np.random.default_rng(31)
    for _ in range(3):
        x = rng.uniform(0.4, 1.6, n_in)
        H = ad.hessian_lagrangian(tape, None, x, 1.0, []).toarray()
        Hfull = H + np.tril(H, -1).T
        h = 1e-6
        Hfd = np.zeros((n_in, n_in))
        for j in range(n_in):
            xp, xm = x.copy(), x.copy()
            xp[j] += h
            xm[j] -= h
            Hfd[:, j] = (ad.gradient(tape, xp) - ad.gradient(tape, xm)) / (2 * h)
        np.testing.assert_allclose(Hfull, Hfd, rtol=2e-4, atol=1e-6)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(min_value=0.2, max_value=1.8), min_size=3, max_size=3))
def test_gradient_matches_fd_property(xs):
    def fn(v):
        return v[0] * v[1] + np.sin(v[2]) + v[2] / v[0]

    tape = ad.record(fn, 3, 1)
    x = np.asarray(xs)
    g = ad.gradient(tape, x)
    gfd = central_jacobian(fn, x)[0]
    np.testing.assert_allclose(g, gfd, rtol=1e-5, atol=1e-7)


@settings(max_examples=30, deadline=None)
@given(st.floats(min_value=-3, max_value=3), st.floats(min_value=-3, max_value=3))
def test_smooth_max_bounds_property(a, b):
    val = ad.smooth_max(a, b, 1e-8)
    assert val >= max(a, b) - 1e-7
    assert val <= max(a, b) + 1e-4
