import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mpcctraj import systems
from mpcctraj.errors import UnknownExample
from mpcctraj.problem import BoundSide


class TestPusherResidual:
    params = systems.PusherSliderParams()

    def residual(self, state, state_dot, y, u):
        return np.asarray(systems.pusher_slider_residual(
            np.asarray(state, float), np.asarray(state_dot, float),
            np.asarray(y, float), np.asarray(u, float), self.params))

    def test_zero_wrench_demands_rest(self):
        for theta in (0.0, 0.7, -2.0):
            res = self.residual([0.1, 0.2, theta, 0.0], [0.0] * 4,
                                [0.0] * 4, [0.0, 0.0])
            np.testing.assert_allclose(res, 0.0, atol=1e-15)

    def test_pure_normal_push_moves_along_world_x(self):
        # theta = 0, no tangential force, zero lever: velocity purely +x
        f_n = 0.3
        lx = self.params.limit_surface_diag[0]
        res = self.residual([0.0, 0.0, 0.0, 0.0],
                            [lx * f_n, 0.0, 0.0, 0.0],
                            [0.0] * 4,
                            [f_n, 0.0])
        np.testing.assert_allclose(res[:4], 0.0, atol=1e-14)

    def test_row_count_and_margin_rows(self):
        res = self.residual([0, 0, 0, 0], [0] * 4, [0, 0, 0.06, 0.06],
                            [0.2, 0.0])
        assert res.shape == (6,)
        # margins equal mu*f_n -+ f_t
        np.testing.assert_allclose(res[4:], 0.0, atol=1e-15)

    def test_slip_velocity_difference_enters_kinematics(self):
        res = self.residual([0, 0, 0, 0], [0.0, 0.0, 0.0, 0.25],
                            [0.3, 0.05, 0.0, 0.0], [0.0, 0.0])
        assert res[3] == pytest.approx(0.25 - (0.3 - 0.05))

    def test_registered_complementarity_pairs(self):
        prob = systems.make_example("pusher", n_elements=4)
        assert prob.n_pairs == 2
        for pair in prob.pairs:
            assert pair.side1 == BoundSide.LOWER
            assert pair.side2 == BoundSide.LOWER
            assert pair.alpha == 1
        assert {(p.idx1, p.idx2) for p in prob.pairs} == {(0, 2), (1, 3)}


class TestCarResidual:
    params = systems.CarParams()

    def residual(self, state, state_dot, u):
        return np.asarray(systems.car_residual(
            np.asarray(state, float), np.asarray(state_dot, float),
            np.asarray(u, float), self.params))

    def test_zero_speed_is_stationary(self):
        res = self.residual([1.0, 2.0, 0.7, 0.0], [0.0] * 4, [0.3, 0.0])
        np.testing.assert_allclose(res[:3], 0.0, atol=1e-15)

    def test_straight_drive(self):
        res = self.residual([0, 0, 0, 1.0], [1.0, 0.0, 0.0, 0.0], [0.0, 0.0])
        np.testing.assert_allclose(res, 0.0, atol=1e-15)

    @settings(max_examples=40, deadline=None)
    @given(st.floats(min_value=-0.5, max_value=0.5),
           st.floats(min_value=0.1, max_value=1.0),
           st.floats(min_value=-3.0, max_value=3.0))
    def test_steady_steer_identity(self, steer, v, theta):
        # theta_dot * wheelbase / (v * tan(steer)) == 1 wherever defined
        if abs(np.tan(steer)) < 1e-6:
            return
        theta_dot = v * np.tan(steer) / self.params.wheelbase
        res = self.residual([0.0, 0.0, theta, v],
                            [v * np.cos(theta), v * np.sin(theta),
                             theta_dot, 0.0],
                            [steer, 0.0])
        np.testing.assert_allclose(res, 0.0, atol=1e-12)
        assert theta_dot * self.params.wheelbase / (v * np.tan(steer)) \
            == pytest.approx(1.0)


class TestMakeExample:
    def test_unknown_name(self):
        with pytest.raises(UnknownExample):
            systems.make_example("warp_drive")

    def test_pusher_defaults_match_scenario(self):
        prob = systems.make_example("pusher")
        params = prob.extras["params"]
        assert params.friction == pytest.approx(0.3)
        assert params.f_normal_max == pytest.approx(0.5)
        np.testing.assert_allclose(prob.x0, [0.0, 0.0, 0.0, 0.0])
        np.testing.assert_allclose(prob.extras["goal"], [0.0, 0.5, np.pi])
        b = prob.bounds_at(0, 0.0)
        assert b.u_hi[0] == pytest.approx(0.5)  # normal force cap

    def test_car_parking_defaults(self):
        prob = systems.make_example("car_parking")
        np.testing.assert_allclose(prob.x0, [1.0, 4.0, 0.0, 0.0])
        np.testing.assert_allclose(prob.extras["goal"],
                                   [2.0, 2.5, np.pi / 2, 0.0])
        assert len(prob.objects) == 3  # car body + two static rectangles
        assert sum(o.is_static for o in prob.objects) == 2
        assert len(prob.separations) == 2

    def test_pusher_modes_structure(self):
        prob = systems.make_example("pusher_modes")
        assert prob.n_pairs == 0  # pairs replaced by mode pinning
        assert prob.info.n_params == 2
        seq = prob.extras["mode_sequence"]
        assert seq.modes == [{0: 2}, {0: 1}]
        np.testing.assert_allclose(prob.extras["goal"], [0.0, 0.0, np.pi])

    def test_pusher_obstacles_has_collision_data(self):
        prob = systems.make_example("pusher_obstacles")
        assert len(prob.objects) == 3
        assert len(prob.separations) == 2
        assert not prob.objects[0].is_static

    def test_every_example_validates(self):
        for name in systems.example_names():
            prob = systems.make_example(name)
            assert prob.info.n_states >= 1

    def test_overrides_forwarded(self):
        prob = systems.make_example("pendulum", n_elements=7, t_final=2.0)
        assert prob.info.n_elements == 7
        assert prob.info.tf == pytest.approx(2.0)
