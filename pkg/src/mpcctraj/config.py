"""Declarative problem/run configuration from JSON files.

Two top-level shapes are accepted:

  {"example": "pusher", "overrides": {...}, ...run options}
      instantiate a bundled scenario, optionally overriding its factory
      arguments;

  {"problem": {...}, ...run options}
      build a problem from data: dimensions, grid, bounds, named built-in
      dynamics, complementarity pairs, and polytope vertex tables.

Run options (ne, nc, roots, relax, delta, rho, tol, max_iter, format, out)
mirror the command-line flags and are overridden by explicit flags.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import ConfigError
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
from . import systems


def _named_dynamics(name: str, params: dict):
    if name == "double_integrator":
        return lambda xd, x, y, u, p, t: [xd[0] - x[1], xd[1] - u[0]]
    if name == "pendulum":
        m = params.get("mass", 1.0)
        length = params.get("length", 1.0)
        g = params.get("gravity", 9.81)
        b = params.get("damping", 0.1)

        def dyn(xd, x, y, u, p, t):
            return [xd[0] - x[1],
                    xd[1] - (u[0] - b * x[1] - m * g * length * np.sin(x[0]))
                    / (m * length ** 2)]

        return dyn
    if name == "car":
        cp = systems.CarParams(**params) if params else systems.CarParams()
        return lambda xd, x, y, u, p, t: systems.car_residual(x, xd, u, cp)
    if name == "pusher_slider":
        pp = systems.PusherSliderParams(**params) if params \
            else systems.PusherSliderParams()
        return lambda xd, x, y, u, p, t: systems.pusher_slider_residual(
            x, xd, y, u, pp)
    raise ConfigError(f"unknown built-in dynamics {name!r}")


def _named_cost(kind, goal):
    if kind == "none":
        return None
    if kind is None or kind == "control_effort":
        return lambda x, y, u, p, t: sum(ui * ui for ui in u)
    if kind == "quadratic_tracking":
        if goal is None:
            raise ConfigError("quadratic_tracking requires a goal")
        g = np.asarray(goal, dtype=np.float64)

        def cost(x, y, u, p, t):
            track = sum((x[k] - g[k]) ** 2 for k in range(len(g)))
            return track + 0.1 * sum(ui * ui for ui in u)

        return cost
    raise ConfigError(f"unknown stage cost {kind!r}")


_SIDES = {"lower": BoundSide.LOWER, "upper": BoundSide.UPPER}


def problem_from_dict(table: dict) -> ValidatedProblem:
    try:
        info = ProblemInfo(
            n_states=table["n_states"],
            n_algebraic=table.get("n_algebraic", 0),
            n_controls=table.get("n_controls", 0),
            n_params=table.get("n_params", 0),
            n_elements=table.get("n_elements", 10),
            element_widths=table.get("element_widths"),
            t0=table.get("t0", 0.0),
            tf=table.get("tf", 1.0),
        )
        x0 = table["x0"]
        dynamics = _named_dynamics(table["dynamics"],
                                   table.get("dynamics_params", {}))
    except KeyError as exc:
        raise ConfigError(f"problem config is missing {exc}") from None

    bounds = VariableBounds(**table.get("bounds", {}))
    pairs = []
    for entry in table.get("complementarities", []):
        i1, s1, i2, s2 = entry
        try:
            pairs.append(ComplementarityPair(i1, _SIDES[s1], i2, _SIDES[s2]))
        except KeyError:
            raise ConfigError(f"bound side must be lower/upper, got {entry}") from None

    objects = []
    for obj in table.get("objects", []):
        verts = np.asarray(obj["vertices"], dtype=np.float64)
        if verts.shape[0] != 3:
            raise ConfigError(
                f"object {obj.get('name', '?')!r} vertex table must have 3 rows")
        objects.append(PolytopeObject(
            name=obj.get("name", f"object{len(objects)}"),
            n_vertices=verts.shape[1],
            is_static=obj.get("static", True),
            vertices=verts,
        ))
    separations = [
        SeparationSpec(s["first"], s["second"],
                       min_distance=s.get("min_distance", 1e-2),
                       smoothing=s.get("smoothing", 1e-4))
        for s in table.get("separations", [])
    ]

    goal = table.get("goal")
    guess = None
    if goal is not None:
        g = np.asarray(goal, dtype=np.float64)
        x0a = np.asarray(x0, dtype=np.float64)

        def guess(t):
            frac = min(max((t - info.t0) / (info.tf - info.t0), 0.0), 1.0)
            gx = x0a + (g - x0a) * frac
            return (gx, np.zeros(info.n_states), np.zeros(info.n_algebraic),
                    np.zeros(info.n_controls))

    defn = ProblemDefinition(
        info=info,
        x0=x0,
        dynamics=dynamics,
        stage_cost=_named_cost(table.get("stage_cost"), goal),
        bounds=bounds,
        initial_guess=guess,
        param_guess=table.get("param_guess"),
        complementarities=pairs,
        objects=objects,
        separations=separations,
        name=table.get("name", "config_problem"),
    )
    prob = validate_problem(defn)
    if goal is not None:
        prob.extras["goal"] = np.asarray(goal, dtype=np.float64)
    if "mode_sequence" in table:
        prob = _apply_mode_sequence(prob, table["mode_sequence"])
    return prob


def _apply_mode_sequence(prob, table: dict):
    from .mode_schedule import ModeSequence, build_mode_problem

    try:
        modes = [{int(k): int(v) for k, v in mode.items()}
                 for mode in table["modes"]]
        seq = ModeSequence(
            modes=modes,
            durations_init=table["durations_init"],
            duration_bounds=[tuple(b) for b in table["duration_bounds"]],
            elements_per_mode=table["elements_per_mode"],
            minimum_time=table.get("minimum_time", False),
        )
    except KeyError as exc:
        raise ConfigError(f"mode_sequence table is missing {exc}") from None
    return build_mode_problem(prob, seq)


def load_config(path: str | Path) -> dict:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file {path} does not exist") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    if "example" not in raw and "problem" not in raw:
        raise ConfigError("config needs an 'example' name or a 'problem' table")
    return raw


def problem_from_config(raw: dict) -> ValidatedProblem:
    if "problem" in raw:
        return problem_from_dict(raw["problem"])
    overrides = raw.get("overrides", {})
    return systems.make_example(raw["example"], **overrides)
