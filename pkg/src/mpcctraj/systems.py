"""Bundled example systems.

Every formulation path gets an exercise: smooth baselines (pendulum swing-up,
double integrator), quasi-static planar pushing with friction-cone
complementarity, pushing among polytope obstacles, kinematic-car parking
with collision avoidance, and a two-face pushing task over a fixed mode
sequence with free durations.

The pusher-slider model: pushing forces act on one face of a square slider;
a convex limit surface maps the applied wrench to the slider twist, and
Coulomb friction at the contact turns sticking/slipping into complementarity
between slip-velocity components and friction-cone margins. The margins are
carried as algebraic variables so complementarity stays between algebraic
quantities.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import UnknownExample
from .mode_schedule import ModeSequence, build_mode_problem
from .problem import (
    BoundSide,
    ComplementarityPair,
    PolytopeObject,
    ProblemDefinition,
    ProblemInfo,
    SeparationSpec,
    ValidatedProblem,
    VariableBounds,
    validate_problem,
)

TWO_PI = 2.0 * np.pi


@dataclass
class PusherSliderParams:
    friction: float = 0.3  # pusher-slider friction coefficient
    f_normal_max: float = 0.5  # newtons
    limit_surface_diag: tuple[float, float, float] = (1.0, 1.0, 400.0)
    half_width: float = 0.05  # slider half-dimension, meters

    def __post_init__(self):
        assert self.friction > 0 and self.f_normal_max > 0
        assert all(v > 0 for v in self.limit_surface_diag)


@dataclass
class CarParams:
    wheelbase: float = 0.25
    steer_max: float = 0.6
    accel_max: float = 1.0
    speed_max: float = 1.0

    def __post_init__(self):
        assert self.wheelbase > 0


def pusher_slider_residual(state, state_dot, y, u, params: PusherSliderParams):
    """DAE residual for left-face pushing; state = [x, y, theta, p_y].

    Algebraic vector: [slip+, slip-, cone margin mu*fn - ft, margin
    mu*fn + ft]; controls: [f_n, f_t]. Returns 6 rows: 4 kinematic and 2
    margin definitions; the two slip/margin complementarities are declared
    separately as pairs.
    """
    xd = state_dot
    theta = state[2]
    p_y = state[3]
    p_x = -params.half_width
    f_n, f_t = u[0], u[1]
    slip_plus, slip_minus, cone1, cone2 = y[0], y[1], y[2], y[3]

    # wrench through the contact Jacobian, then the limit-surface twist
    w1 = f_n
    w2 = f_t
    w3 = -p_y * f_n + p_x * f_t
    lx, ly, lt = params.limit_surface_diag
    t1 = lx * w1
    t2 = ly * w2
    t3 = lt * w3
    ct, st = np.cos(theta), np.sin(theta)
    return [
        xd[0] - (ct * t1 - st * t2),
        xd[1] - (st * t1 + ct * t2),
        xd[2] - t3,
        xd[3] - (slip_plus - slip_minus),
        cone1 - (params.friction * f_n - f_t),
        cone2 - (params.friction * f_n + f_t),
    ]


def car_residual(state, state_dot, u, params: CarParams):
    """Kinematic bicycle: state = [x, y, heading, speed], u = [steer, accel]."""
    xd = state_dot
    theta, v = state[2], state[3]
    steer, accel = u[0], u[1]
    return [
        xd[0] - v * np.cos(theta),
        xd[1] - v * np.sin(theta),
        xd[2] - v * np.tan(steer) / params.wheelbase,
        xd[3] - accel,
    ]


def _interp(a, b, t, tf):
    frac = min(max(t / tf, 0.0), 1.0)
    return a + (b - a) * frac


def _box_polytope(x0, x1, y0, y1) -> np.ndarray:
    return np.array([[x0, x1, x1, x0],
                     [y0, y0, y1, y1],
                     [0.0, 0.0, 0.0, 0.0]])


def _square_body_map(half: float):
    """Vertex map of a square body centered on the planar pose (x, y, theta)."""
    corners = [(-half, -half), (half, -half), (half, half), (-half, half)]

    def vmap(x, y_alg):
        ct, st = np.cos(x[2]), np.sin(x[2])
        row0 = [x[0] + ct * cx - st * cy for cx, cy in corners]
        row1 = [x[1] + st * cx + ct * cy for cx, cy in corners]
        row2 = [0.0 * x[0] for _ in corners]
        return [row0, row1, row2]

    return vmap


def _car_body_map(rear: float, front: float, half_width: float):
    corners = [(-rear, -half_width), (front, -half_width),
               (front, half_width), (-rear, half_width)]

    def vmap(x, y_alg):
        ct, st = np.cos(x[2]), np.sin(x[2])
        row0 = [x[0] + ct * cx - st * cy for cx, cy in corners]
        row1 = [x[1] + st * cx + ct * cy for cx, cy in corners]
        row2 = [0.0 * x[0] for _ in corners]
        return [row0, row1, row2]

    return vmap


def make_pendulum(n_elements: int = 50, t_final: float = 3.0,
                  torque_max: float = 8.0) -> ValidatedProblem:
    """Swing-up to the upright position with a torque-effort tradeoff."""
    m, length, g, damping = 1.0, 1.0, 9.81, 0.1
    goal = np.pi

    def dyn(xd, x, y, u, p, t):
        return [xd[0] - x[1],
                xd[1] - (u[0] - damping * x[1] - m * g * length * np.sin(x[0]))
                / (m * length ** 2)]

    def cost(x, y, u, p, t):
        return 10.0 * (x[0] - goal) ** 2 + 0.1 * x[1] ** 2 + 0.1 * u[0] ** 2

    def guess(t):
        th = _interp(0.0, goal, t, t_final)
        return [th, 0.0], [0.0, 0.0], [], [0.0]

    defn = ProblemDefinition(
        info=ProblemInfo(2, 0, 1, n_elements=n_elements, t0=0.0, tf=t_final),
        x0=[0.0, 0.0],
        dynamics=dyn,
        stage_cost=cost,
        bounds=VariableBounds(
            x_lo=[-TWO_PI, -20.0], x_hi=[TWO_PI, 20.0],
            u_lo=[-torque_max], u_hi=[torque_max],
            x_final_lo=[goal - 1e-3, -1e-3], x_final_hi=[goal + 1e-3, 1e-3]),
        initial_guess=guess,
        name="pendulum",
    )
    prob = validate_problem(defn)
    prob.extras["goal"] = np.array([goal, 0.0])
    return prob


def make_double_integrator(n_elements: int = 20, t_final: float = 3.0) -> ValidatedProblem:
    def dyn(xd, x, y, u, p, t):
        return [xd[0] - x[1], xd[1] - u[0]]

    def cost(x, y, u, p, t):
        return u[0] ** 2

    defn = ProblemDefinition(
        info=ProblemInfo(2, 0, 1, n_elements=n_elements, t0=0.0, tf=t_final),
        x0=[0.0, 0.0],
        dynamics=dyn,
        stage_cost=cost,
        bounds=VariableBounds(u_lo=[-1.0], u_hi=[1.0],
                              x_final_lo=[1.0, 0.0], x_final_hi=[1.0, 0.0]),
        initial_guess=lambda t: ([_interp(0.0, 1.0, t, t_final), 0.0],
                                 [0.0, 0.0], [], [0.0]),
        name="double_integrator",
    )
    prob = validate_problem(defn)
    prob.extras["goal"] = np.array([1.0, 0.0])
    return prob


def _pusher_bounds(params: PusherSliderParams, goal, pose_tol, theta_tol):
    fmax = params.f_normal_max
    ft_max = params.friction * fmax
    return VariableBounds(
        x_lo=[-1.0, -1.0, -TWO_PI, -params.half_width],
        x_hi=[1.0, 1.0, TWO_PI, params.half_width],
        y_lo=[0.0, 0.0, 0.0, 0.0],
        y_hi=[5.0, 5.0, 2.0 * ft_max, 2.0 * ft_max],
        u_lo=[0.0, -ft_max],
        u_hi=[fmax, ft_max],
        x_final_lo=[goal[0] - pose_tol, goal[1] - pose_tol,
                    goal[2] - theta_tol, -params.half_width],
        x_final_hi=[goal[0] + pose_tol, goal[1] + pose_tol,
                    goal[2] + theta_tol, params.half_width],
    )


def make_pusher(n_elements: int = 40, t_final: float = 5.0,
                goal: Sequence[float] = (0.0, 0.5, np.pi),
                params: PusherSliderParams | None = None,
                pose_tol: float = 5e-3, theta_tol: float = 2e-2,
                obstacles: list[np.ndarray] | None = None,
                min_separation: float = 1e-2) -> ValidatedProblem:
    """Planar pushing from the origin; slipping handled by complementarity.

    With ``obstacles`` given (list of static vertex matrices), the slider
    body must keep the requested separation from each of them.
    """
    params = params or PusherSliderParams()
    goal = np.asarray(goal, dtype=np.float64)

    def dyn(xd, x, y, u, p, t):
        return pusher_slider_residual(x, xd, y, u, params)

    def cost(x, y, u, p, t):
        track = (x[0] - goal[0]) ** 2 + (x[1] - goal[1]) ** 2 \
            + 0.5 * (x[2] - goal[2]) ** 2
        effort = u[0] ** 2 + u[1] ** 2
        slip = y[0] ** 2 + y[1] ** 2
        return track + 0.1 * effort + 1e-3 * slip

    fn0 = 0.3 * params.f_normal_max

    def guess(t):
        x = [_interp(0.0, goal[0], t, t_final),
             _interp(0.0, goal[1], t, t_final),
             _interp(0.0, goal[2], t, t_final), 0.0]
        y = [0.0, 0.0, params.friction * fn0, params.friction * fn0]
        return x, [0.0, 0.0, 0.0, 0.0], y, [fn0, 0.0]

    pairs = [
        ComplementarityPair(0, BoundSide.LOWER, 2, BoundSide.LOWER),
        ComplementarityPair(1, BoundSide.LOWER, 3, BoundSide.LOWER),
    ]
    objects: list[PolytopeObject] = []
    seps: list[SeparationSpec] = []
    if obstacles:
        objects.append(PolytopeObject(
            "slider", 4, is_static=False,
            vertex_map=_square_body_map(params.half_width)))
        for k, verts in enumerate(obstacles):
            objects.append(PolytopeObject(
                f"obstacle{k}", np.asarray(verts).shape[1], is_static=True,
                vertices=np.asarray(verts, dtype=np.float64)))
            seps.append(SeparationSpec(0, k + 1, min_distance=min_separation))

    defn = ProblemDefinition(
        info=ProblemInfo(4, 4, 2, n_elements=n_elements, t0=0.0, tf=t_final),
        x0=[0.0, 0.0, 0.0, 0.0],
        dynamics=dyn,
        stage_cost=cost,
        bounds=_pusher_bounds(params, goal, pose_tol, theta_tol),
        initial_guess=guess,
        complementarities=pairs,
        objects=objects,
        separations=seps,
        name="pusher" if not obstacles else "pusher_obstacles",
    )
    prob = validate_problem(defn)
    prob.extras["goal"] = goal
    prob.extras["params"] = params
    return prob


def make_pusher_obstacles(n_elements: int = 20, t_final: float = 5.0,
                          goal: Sequence[float] = (0.5, 0.5, 0.0),
                          **kwargs) -> ValidatedProblem:
    """Pushing between two static square obstacles flanking the path."""
    obstacles = [
        _box_polytope(0.02, 0.17, 0.33, 0.48),
        _box_polytope(0.33, 0.48, 0.02, 0.17),
    ]
    return make_pusher(n_elements=n_elements, t_final=t_final, goal=goal,
                       obstacles=obstacles, **kwargs)


def make_car_parking(n_elements: int = 30, t_final: float = 6.0,
                     params: CarParams | None = None,
                     start: Sequence[float] = (1.0, 4.0, 0.0, 0.0),
                     goal: Sequence[float] = (2.0, 2.5, np.pi / 2, 0.0),
                     obstacles: list[np.ndarray] | None = None,
                     min_separation: float = 1e-2,
                     pose_tol: float = 5e-3) -> ValidatedProblem:
    """Back into the gap between two static rectangles."""
    params = params or CarParams()
    start = np.asarray(start, dtype=np.float64)
    goal = np.asarray(goal, dtype=np.float64)
    if obstacles is None:
        obstacles = [
            _box_polytope(0.0, 1.65, 1.5, 3.0),
            _box_polytope(2.35, 4.0, 1.5, 3.0),
        ]

    def dyn(xd, x, y, u, p, t):
        return car_residual(x, xd, u, params)

    def cost(x, y, u, p, t):
        track = (x[0] - goal[0]) ** 2 + (x[1] - goal[1]) ** 2 \
            + 0.5 * (x[2] - goal[2]) ** 2
        return 0.2 * track + 0.5 * (u[0] ** 2 + u[1] ** 2)

    def guess(t):
        x = [_interp(start[k], goal[k], t, t_final) for k in range(4)]
        return x, [0.0] * 4, [], [0.0, 0.0]

    objects = [PolytopeObject("car", 4, is_static=False,
                              vertex_map=_car_body_map(0.05, 0.45, 0.15))]
    seps = []
    for k, verts in enumerate(obstacles):
        objects.append(PolytopeObject(
            f"obstacle{k}", np.asarray(verts).shape[1], is_static=True,
            vertices=np.asarray(verts, dtype=np.float64)))
        seps.append(SeparationSpec(0, k + 1, min_distance=min_separation))

    defn = ProblemDefinition(
        info=ProblemInfo(4, 0, 2, n_elements=n_elements, t0=0.0, tf=t_final),
        x0=start,
        dynamics=dyn,
        stage_cost=cost,
        bounds=VariableBounds(
            x_lo=[-1.0, 0.0, -TWO_PI, -params.speed_max],
            x_hi=[5.0, 6.0, TWO_PI, params.speed_max],
            u_lo=[-params.steer_max, -params.accel_max],
            u_hi=[params.steer_max, params.accel_max],
            x_final_lo=goal - pose_tol, x_final_hi=goal + pose_tol),
        initial_guess=guess,
        objects=objects,
        separations=seps,
        name="car_parking",
    )
    prob = validate_problem(defn)
    prob.extras["goal"] = goal
    prob.extras["params"] = params
    return prob


def two_face_pusher_residual(state, state_dot, y, u, params: PusherSliderParams):
    """Sticking contact on the left and top faces simultaneously modeled.

    state = [x, y, theta]; u = [total normal effort, tangential left,
    tangential top]; y = [fn_left, fn_top, 4 cone margins]. A
    complementarity pair fn_left x fn_top lets only one face be active at a
    time; the effort-split row conserves u[0] = fn_left + fn_top.
    """
    xd = state_dot
    theta = state[2]
    w = params.half_width
    fn_l, fn_t = y[0], y[1]
    m1, m2, m3, m4 = y[2], y[3], y[4], y[5]
    u_f, ft_l, ft_t = u[0], u[1], u[2]
    mu = params.friction

    # left face contact at (-w, 0): normal (1,0); top face at (0, w): normal (0,-1)
    w1 = fn_l + ft_t
    w2 = ft_l - fn_t
    w3 = -w * ft_l - w * ft_t
    lx, ly, lt = params.limit_surface_diag
    t1, t2, t3 = lx * w1, ly * w2, lt * w3
    ct, st = np.cos(theta), np.sin(theta)
    return [
        xd[0] - (ct * t1 - st * t2),
        xd[1] - (st * t1 + ct * t2),
        xd[2] - t3,
        fn_l + fn_t - u_f,
        m1 - (mu * fn_l - ft_l),
        m2 - (mu * fn_l + ft_l),
        m3 - (mu * fn_t - ft_t),
        m4 - (mu * fn_t + ft_t),
    ]


def make_pusher_modes(elements_per_mode: Sequence[int] = (12, 8),
                      goal: Sequence[float] = (0.0, 0.0, np.pi),
                      params: PusherSliderParams | None = None,
                      durations_init: Sequence[float] = (6.0, 2.0),
                      duration_bounds=((0.2, 40.0), (0.2, 40.0)),
                      theta_tol: float = 2e-2,
                      pose_tol: float = 5e-3) -> ValidatedProblem:
    """Two sticking-contact modes (left face, then top face), minimum time."""
    params = params or PusherSliderParams()
    goal = np.asarray(goal, dtype=np.float64)
    fmax = params.f_normal_max
    ft_max = params.friction * fmax

    def dyn(xd, x, y, u, p, t):
        return two_face_pusher_residual(x, xd, y, u, params)

    def cost(x, y, u, p, t):
        return 1e-2 * (u[0] ** 2 + u[1] ** 2 + u[2] ** 2)

    def guess(t):
        tf_guess = float(np.sum(durations_init))
        x = [0.0, 0.0, _interp(0.0, goal[2], t, tf_guess)]
        y = [0.5 * fmax, 0.0, params.friction * 0.5 * fmax,
             params.friction * 0.5 * fmax, 0.0, 0.0]
        return x, [0.0, 0.0, 0.0], y, [0.5 * fmax, 0.0, 0.0]

    base = validate_problem(ProblemDefinition(
        info=ProblemInfo(3, 6, 3, n_elements=2, t0=0.0,
                         tf=float(np.sum(durations_init))),
        x0=[0.0, 0.0, 0.0],
        dynamics=dyn,
        stage_cost=cost,
        bounds=VariableBounds(
            x_lo=[-1.0, -1.0, -TWO_PI], x_hi=[1.0, 1.0, TWO_PI],
            y_lo=[0.0] * 6,
            y_hi=[fmax, fmax, 2 * ft_max, 2 * ft_max, 2 * ft_max, 2 * ft_max],
            u_lo=[0.0, -ft_max, -ft_max], u_hi=[fmax, ft_max, ft_max],
            x_final_lo=[goal[0] - pose_tol, goal[1] - pose_tol, goal[2] - theta_tol],
            x_final_hi=[goal[0] + pose_tol, goal[1] + pose_tol, goal[2] + theta_tol]),
        initial_guess=guess,
        complementarities=[ComplementarityPair(0, BoundSide.LOWER,
                                               1, BoundSide.LOWER)],
        name="pusher_modes",
    ))
    seq = ModeSequence(
        modes=[{0: 2}, {0: 1}],  # mode 1: top face pinned off; mode 2: left off
        durations_init=list(durations_init),
        duration_bounds=list(duration_bounds),
        elements_per_mode=list(elements_per_mode),
        minimum_time=True,
        # an inactive face exerts nothing: its tangential force and cone
        # margins are switched off with the normal force
        extra_pins=[
            {("u", 2): 0.0, ("y", 4): 0.0, ("y", 5): 0.0},
            {("u", 1): 0.0, ("y", 2): 0.0, ("y", 3): 0.0},
        ],
    )
    prob = build_mode_problem(base, seq)
    prob.extras["goal"] = goal
    prob.extras["params"] = params
    return prob


_EXAMPLES = {
    "pendulum": make_pendulum,
    "double_integrator": make_double_integrator,
    "pusher": make_pusher,
    "pusher_obstacles": make_pusher_obstacles,
    "car_parking": make_car_parking,
    "pusher_modes": make_pusher_modes,
}


def example_names() -> list[str]:
    return sorted(_EXAMPLES)


def make_example(name: str, **overrides) -> ValidatedProblem:
    """Instantiate a bundled scenario by name.

    ``params`` may be passed as a plain mapping (say, from a config file);
    it is promoted to the scenario's parameter record.
    """
    try:
        factory = _EXAMPLES[name]
    except KeyError:
        raise UnknownExample(
            f"unknown example {name!r}; available: {', '.join(example_names())}"
        ) from None
    if isinstance(overrides.get("params"), dict):
        cls = CarParams if name == "car_parking" else PusherSliderParams
        fields = dict(overrides["params"])
        if "limit_surface_diag" in fields:
            fields["limit_surface_diag"] = tuple(fields["limit_surface_diag"])
        overrides["params"] = cls(**fields)
    return factory(**overrides)
