"""Fixed mode sequences with unknown durations via time scaling.

A mode assigns one branch of every complementarity pair; over a known mode
sequence the disjunctive structure disappears: each mode's active branch is
pinned through equal bounds on the corresponding algebraic variable and the
complementarity rows are dropped. The unknown mode durations T_m become
optimization parameters; time is rescaled so mode m occupies the unit
interval [m-1, m], which fixes the switching instants in the scaled
coordinate. The state-derivative variables then carry scaled-time slopes,
so the dynamics see xdot/T_m and the running cost picks up a factor T_m.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import BranchOutOfRange, EmptyMode, NonpositiveDuration
from .problem import ProblemInfo, ResolvedBounds, ValidatedProblem
from .trajectory import Trajectory


@dataclass
class ModeSequence:
    """Ordered branch assignments with per-mode duration data.

    ``modes[m]`` maps pair index -> branch (1 pins the pair's first side,
    2 its second, per the piecewise bound table). An empty map is allowed
    when the base problem has no pairs (plain minimum-time problems).

    ``extra_pins[m]`` optionally pins further variables per mode, keyed
    ('y', idx) or ('u', idx) -> value; contact models use this to switch a
    whole inactive contact off (forces, cone margins) so the pinned mode
    keeps a nonempty strict interior.
    """

    modes: list[dict[int, int]]
    durations_init: Sequence[float]
    duration_bounds: Sequence[tuple[float, float]]
    elements_per_mode: Sequence[int]
    minimum_time: bool = False
    extra_pins: Optional[list[dict]] = None

    @property
    def n_modes(self) -> int:
        return len(self.modes)


def _pin(bounds: ResolvedBounds, idx: int, value: float) -> None:
    bounds.y_lo[idx] = value
    bounds.y_hi[idx] = value


def build_mode_problem(base: ValidatedProblem, seq: ModeSequence) -> ValidatedProblem:
    """Recast ``base`` over the scaled-time mode sequence.

    The result has no complementarity pairs; branch activity enters through
    per-element bound pinning, durations through appended parameters.
    """
    M = seq.n_modes
    if M < 1:
        raise EmptyMode("a mode sequence needs at least one mode")
    if len(seq.durations_init) != M or len(seq.duration_bounds) != M \
            or len(seq.elements_per_mode) != M:
        raise EmptyMode("mode sequence arrays must all have one entry per mode")
    for n in seq.elements_per_mode:
        if n < 1:
            raise EmptyMode("every mode needs at least one finite element")
    for t_init, (t_min, t_max) in zip(seq.durations_init, seq.duration_bounds):
        if t_min <= 0.0:
            raise NonpositiveDuration("duration lower bounds must be positive")
        if not (t_min <= t_init <= t_max):
            raise NonpositiveDuration(
                f"duration guess {t_init} outside [{t_min}, {t_max}]")
    n_pairs = len(base.pairs)
    for m, branch_map in enumerate(seq.modes):
        for l, b in branch_map.items():
            if not 0 <= l < n_pairs:
                raise BranchOutOfRange(f"mode {m} references unknown pair {l}")
            if b not in (1, 2):
                raise BranchOutOfRange(f"mode {m} assigns branch {b} to pair {l}")
        missing = set(range(n_pairs)) - set(branch_map)
        if missing:
            raise BranchOutOfRange(
                f"mode {m} leaves pairs {sorted(missing)} without a branch")

    info = base.info
    n_e = int(sum(seq.elements_per_mode))
    widths = np.concatenate([
        np.full(n, 1.0 / n) for n in seq.elements_per_mode])
    element_mode = np.concatenate([
        np.full(n, m, dtype=np.int64) for m, n in enumerate(seq.elements_per_mode)])

    new_info = ProblemInfo(
        n_states=info.n_states,
        n_algebraic=info.n_algebraic,
        n_controls=info.n_controls,
        n_params=info.n_params + M,
        n_elements=n_e,
        element_widths=widths,
        t0=0.0,
        tf=float(M),
    )

    # per-element bounds with the active branch pinned
    element_bounds: list[ResolvedBounds] = []
    cum = np.concatenate([[0.0], np.cumsum(widths)])
    dur_lo = np.array([b[0] for b in seq.duration_bounds])
    dur_hi = np.array([b[1] for b in seq.duration_bounds])
    init_durs = np.asarray(seq.durations_init, dtype=np.float64)

    def scaled_to_guess_time(t_scaled: float) -> float:
        m = min(int(t_scaled), M - 1)
        return float(np.sum(init_durs[:m]) + (t_scaled - m) * init_durs[m])

    for i in range(n_e):
        m = int(element_mode[i])
        t_mid = scaled_to_guess_time(0.5 * (cum[i] + cum[i + 1]))
        b = base.bounds_at(0, t_mid)
        rb = ResolvedBounds(
            x_lo=b.x_lo.copy(), x_hi=b.x_hi.copy(),
            xdot_lo=b.xdot_lo.copy(), xdot_hi=b.xdot_hi.copy(),
            y_lo=b.y_lo.copy(), y_hi=b.y_hi.copy(),
            u_lo=b.u_lo.copy(), u_hi=b.u_hi.copy(),
            p_lo=np.concatenate([b.p_lo, dur_lo]),
            p_hi=np.concatenate([b.p_hi, dur_hi]),
            x_final_lo=b.x_final_lo, x_final_hi=b.x_final_hi,
        )
        for l, branch in seq.modes[m].items():
            pair = base.pairs[l]
            nu1, nu2 = base.nu_value(pair, 0)
            if branch == 1:
                _pin(rb, pair.idx1, nu1)
            else:
                _pin(rb, pair.idx2, nu2)
        if seq.extra_pins is not None:
            for (kind, idx), value in seq.extra_pins[m].items():
                if kind == "y":
                    _pin(rb, idx, value)
                elif kind == "u":
                    rb.u_lo[idx] = value
                    rb.u_hi[idx] = value
                else:
                    raise BranchOutOfRange(f"unknown pin kind {kind!r}")
        # scaled-time slopes: xdot here is T_m times the physical rate, and
        # T_m is itself a variable, so finite bounds widen conservatively
        lo_f = np.isfinite(rb.xdot_lo)
        hi_f = np.isfinite(rb.xdot_hi)
        rb.xdot_lo[lo_f] = np.minimum(b.xdot_lo[lo_f] * dur_lo[m],
                                      b.xdot_lo[lo_f] * dur_hi[m])
        rb.xdot_hi[hi_f] = np.maximum(b.xdot_hi[hi_f] * dur_lo[m],
                                      b.xdot_hi[hi_f] * dur_hi[m])
        element_bounds.append(rb)

    n_p_base = info.n_params
    dyn_base = [base.dynamics_for_class(c) for c in range(base.n_classes)]
    cost_base = [base.stage_cost_for_class(c) for c in range(base.n_classes)]
    if base.n_classes != 1:
        raise BranchOutOfRange("mode sequences cannot nest inside mode problems")

    def make_dynamics(m: int):
        f = dyn_base[0]

        def dyn(xdot, x, y, u, p, t):
            T = p[n_p_base + m]
            xdot_phys = np.array([xd / T for xd in xdot], dtype=object)
            return f(xdot_phys, x, y, u, p[:n_p_base], t)

        return dyn

    def make_cost(m: int):
        c = cost_base[0]
        if c is None:
            return None

        def cost(x, y, u, p, t):
            return p[n_p_base + m] * c(x, y, u, p[:n_p_base], t)

        return cost

    base_mayer = base.mayer

    def mayer(xf, p):
        total = 0.0
        if seq.minimum_time:
            for m in range(M):
                total = total + p[n_p_base + m]
        if base_mayer is not None:
            total = total + base_mayer(xf, p[:n_p_base])
        return total

    use_mayer = seq.minimum_time or base_mayer is not None

    base_guess = base.guess_at

    def guess(t_scaled: float):
        m = min(int(t_scaled), M - 1)
        gx, gxd, gy, gu = base_guess(scaled_to_guess_time(t_scaled))
        return gx, gxd * init_durs[m], gy, gu

    return ValidatedProblem(
        info=new_info,
        x0=base.x0,
        widths=widths,
        pairs=[],
        n_pairs=0,
        residual_dim=base.residual_dim,
        objects=base.objects,
        separations=base.separations,
        param_guess=np.concatenate([base.param_guess, init_durs]),
        name=f"{base.name}+modes",
        _dynamics=[make_dynamics(m) for m in range(M)],
        _stage_cost=[make_cost(m) for m in range(M)],
        _mayer=mayer if use_mayer else None,
        _bounds_static=None,
        _bounds_fn=None,
        _guess=guess,
        element_class=element_mode,
        element_bounds=element_bounds,
        extras={
            "mode_sequence": seq,
            "duration_param_indices": np.arange(n_p_base, n_p_base + M),
            "base_problem": base,
        },
    )


def unscale_trajectory(traj: Trajectory, durations: Sequence[float]) -> Trajectory:
    """Map a scaled-time trajectory back to absolute time.

    Mode membership is recovered from the integer boundaries of the scaled
    grid. State, algebraic and control samples are unchanged; scaled-time
    slopes are divided by the mode duration.
    """
    durations = np.asarray(durations, dtype=np.float64)
    if np.any(durations <= 0.0):
        raise NonpositiveDuration("mode durations must be positive")
    starts = traj.element_starts()
    mode_of_element = np.minimum(
        np.floor(starts + 1e-12).astype(int), len(durations) - 1)
    new_widths = traj.widths * durations[mode_of_element]
    new_xdot = traj.xdot / durations[mode_of_element][:, None, None]
    return Trajectory(
        t0=traj.t0,
        widths=new_widths,
        state_nodes=traj.state_nodes,
        stage_nodes=traj.stage_nodes,
        x=traj.x.copy(),
        xdot=new_xdot,
        y=traj.y.copy(),
        u=traj.u.copy(),
    )
