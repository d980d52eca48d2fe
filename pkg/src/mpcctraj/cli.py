"""Command-line front end: solve bundled or configured problems, benchmark.

Data outputs are byte-identical across repeated runs: trajectory files and
iteration logs contain no timestamps, and floats are written in shortest
round-trip form. Wall-clock timing appears only in the summary.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import api, collocation, ipm, mpcc, systems
from .config import load_config, problem_from_config
from .errors import ConfigError, ToolkitError

logger = logging.getLogger("mpcctraj")

_ROOTS = {"legendre": collocation.LEGENDRE, "radau": collocation.RADAU,
          "euler": collocation.EULER}

_DEFAULTS = {
    "ne": None, "nc": 1, "roots": "radau", "relax": mpcc.PER_POINT_BARRIER,
    "delta": 1e-6, "rho": 10.0, "tol": 1e-8, "max_iter": 3000,
    "out": "runs", "format": "csv",
}


@dataclass
class RunConfig:
    """Effective options of one solve run (CLI flags > config file > defaults)."""

    example: str | None = None
    config_path: str | None = None
    ne: int | None = None
    nc: int = 1
    roots: str = "radau"
    relax: str = mpcc.PER_POINT_BARRIER
    delta: float = 1e-6
    rho: float = 10.0
    tol: float = 1e-8
    max_iter: int = 3000
    out: str = "runs"
    format: str = "csv"
    overrides: dict = field(default_factory=dict)

    @staticmethod
    def from_sources(cli_args: dict, raw_config: dict | None) -> "RunConfig":
        values = dict(_DEFAULTS)
        if raw_config:
            for key in _DEFAULTS:
                if key in raw_config:
                    values[key] = raw_config[key]
        for key in _DEFAULTS:
            if cli_args.get(key) is not None:
                values[key] = cli_args[key]
        return RunConfig(
            example=cli_args.get("example"),
            config_path=cli_args.get("config_path"),
            overrides=(raw_config or {}).get("overrides", {}),
            **values,
        )

    def validate(self) -> None:
        if self.roots not in _ROOTS:
            raise ConfigError(
                f"unknown roots {self.roots!r}; choose from {sorted(_ROOTS)}")
        if self.relax not in mpcc.MODES:
            raise ConfigError(
                f"unknown relaxation {self.relax!r}; choose from {mpcc.MODES}")
        if self.format not in ("csv", "json"):
            raise ConfigError("format must be csv or json")
        if self.ne is not None and self.ne < 1:
            raise ConfigError("ne must be at least 1")
        if not 1 <= self.nc <= 5:
            raise ConfigError("nc must lie in [1, 5]")


def _fmt(v: float) -> str:
    return repr(float(v))


def write_trajectory_csv(path: Path, times, rows, header: list[str]) -> None:
    lines = [",".join(header)]
    for t, row in zip(times, rows):
        lines.append(",".join([_fmt(t)] + [_fmt(v) for v in row]))
    path.write_text("\n".join(lines) + "\n")


def read_trajectory_csv(path: Path):
    lines = path.read_text().strip().split("\n")
    header = lines[0].split(",")
    data = np.array([[float(v) for v in line.split(",")] for line in lines[1:]])
    return header, data[:, 0], data[:, 1:]


def write_trajectory_json(path: Path, times, rows, header: list[str]) -> None:
    payload = {"columns": header,
               "rows": [[float(t)] + [float(v) for v in row]
                        for t, row in zip(times, rows)]}
    path.write_text(json.dumps(payload) + "\n")


def read_trajectory_json(path: Path):
    payload = json.loads(path.read_text())
    data = np.asarray(payload["rows"], dtype=np.float64)
    return payload["columns"], data[:, 0], data[:, 1:]


def _column_header(dims) -> list[str]:
    n_x, n_y, n_u, _ = dims
    cols = ["t"]
    cols += [f"x_{k}" for k in range(n_x)]
    cols += [f"xdot_{k}" for k in range(n_x)]
    cols += [f"y_{k}" for k in range(n_y)]
    cols += [f"u_{k}" for k in range(n_u)]
    return cols


def _build_problem(cfg: RunConfig, raw_config: dict | None):
    if raw_config is not None:
        return problem_from_config(raw_config)
    if not cfg.example:
        raise ConfigError("either --example or --config is required")
    overrides = dict(cfg.overrides)
    if cfg.ne is not None:
        overrides.setdefault("n_elements", cfg.ne)
    try:
        return systems.make_example(cfg.example, **overrides)
    except TypeError as exc:
        raise ConfigError(f"bad options for example {cfg.example!r}: {exc}") from None


def _solve_from_config(cfg: RunConfig, raw_config: dict | None):
    problem = _build_problem(cfg, raw_config)
    scheme = collocation.RootScheme(_ROOTS[cfg.roots], cfg.nc)
    policy = mpcc.RelaxationPolicy(mode=cfg.relax, delta=cfg.delta,
                                   penalty_weight=cfg.rho)
    options = ipm.SolverOptions(kkt_tol=cfg.tol, max_iter=cfg.max_iter)
    t0 = time.perf_counter()
    result = api.solve_problem(problem, scheme, policy, options)
    return result, time.perf_counter() - t0


def run(cfg: RunConfig, raw_config: dict | None = None) -> int:
    """Solve one configuration; write trajectory, summary, iteration log."""
    try:
        cfg.validate()
        result, wall = _solve_from_config(cfg, raw_config)
    except ToolkitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    times, rows = result.trajectory.to_rows(cfg.nc)
    header = _column_header(result.nlp.meta["dims"])
    if cfg.format == "csv":
        write_trajectory_csv(out / "trajectory.csv", times, rows, header)
    else:
        write_trajectory_json(out / "trajectory.json", times, rows, header)

    sol = result.solution
    log_lines = [rec.format() for rec in sol.iteration_log]
    (out / "iterations.log").write_text(
        "\n".join(log_lines) + ("\n" if log_lines else ""))

    summary = {
        "problem": result.problem.name,
        "status": sol.status,
        "objective": sol.objective,
        "iterations": sol.iterations,
        "residuals": {
            "stationarity": sol.residuals.stationarity,
            "feasibility": sol.residuals.feasibility,
            "complementarity": sol.residuals.complementarity,
        },
        "complementarity_residual": result.complementarity,
        "delta_final": sol.delta_final,
        "pair_min_distances": result.pair_min_distances,
        "problem_size": {"variables": result.nlp.num_vars,
                         "rows": result.nlp.num_rows},
        "mu_final": sol.mu_log[-1] if sol.mu_log else None,
        "solve_seconds": wall,
    }
    if result.durations is not None:
        summary["mode_durations"] = [float(v) for v in result.durations]
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")

    print(f"{result.problem.name}: {sol.status} objective={sol.objective:.9g} "
          f"iterations={sol.iterations} wall={wall:.2f}s -> {out}")
    return 0 if sol.is_optimal else 2


def bench(targets: list[str], repeats: int = 5) -> int:
    """Timing table over example names or config paths.

    Reports mean +- std wall time over ``repeats`` identical solves plus
    problem size, cost and iteration count; failures become table rows.
    """
    if not targets:
        print("error: bench needs at least one example or config", file=sys.stderr)
        return 1
    rows = []
    for name in targets:
        raw_config = None
        cli_args = {}
        if name.endswith(".json") or os.sep in name:
            cli_args["config_path"] = name
        else:
            cli_args["example"] = name
        try:
            if "config_path" in cli_args:
                raw_config = load_config(cli_args["config_path"])
            cfg = RunConfig.from_sources(cli_args, raw_config)
            cfg.validate()
            samples = []
            result = None
            for _ in range(repeats):
                result, wall = _solve_from_config(cfg, raw_config)
                samples.append(wall)
            rows.append((result.problem.name, result.problem.info.n_states,
                         float(np.mean(samples)), float(np.std(samples)),
                         result.nlp.num_vars, result.objective,
                         result.solution.iterations, result.status))
        except ToolkitError as exc:
            rows.append((name, -1, float("nan"), float("nan"), -1,
                         float("nan"), -1, f"failed: {exc}"))
    print(f"{'system':<20} {'dim':>4} {'time mean+-std [s]':>24} "
          f"{'size':>7} {'cost':>14} {'iters':>6}  status")
    for name, dim, mean, std, size, cost, iters, status in rows:
        print(f"{name:<20} {dim:>4} {mean:>13.4f} +- {std:<8.4f} "
              f"{size:>7} {cost:>14.6g} {iters:>6}  {status}")
    return 0


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors exit 1 per the CLI contract
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(1)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mpcctraj",
                     description="Trajectory optimization with contact "
                                 "complementarity and polytope separation")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    ps = sub.add_parser("solve", help="solve one problem")
    ps.add_argument("--example", choices=systems.example_names())
    ps.add_argument("--config", dest="config_path")
    ps.add_argument("--ne", type=int, dest="ne")
    ps.add_argument("--nc", type=int)
    ps.add_argument("--roots", choices=sorted(_ROOTS))
    ps.add_argument("--relax", choices=list(mpcc.MODES))
    ps.add_argument("--delta", type=float)
    ps.add_argument("--rho", type=float)
    ps.add_argument("--tol", type=float)
    ps.add_argument("--max-iter", type=int, dest="max_iter")
    ps.add_argument("--out")
    ps.add_argument("--format", choices=("csv", "json"))

    pb = sub.add_parser("bench", help="benchmark examples or configs")
    pb.add_argument("targets", nargs="*", help="example names or config paths")
    pb.add_argument("--repeats", type=int, default=5)
    return parser


def main(argv: list[str] | None = None) -> int:
    level = os.environ.get("MPCCTRAJ_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(name)s %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command == "solve":
        raw_config = None
        if args.config_path:
            try:
                raw_config = load_config(args.config_path)
            except ConfigError as exc:
                print(f"error: {exc}", file=sys.stderr)
                return 1
        cfg = RunConfig.from_sources(vars(args), raw_config)
        return run(cfg, raw_config)
    if args.command == "bench":
        return bench(args.targets, repeats=args.repeats)
    return 1  # pragma: no cover


if __name__ == "__main__":
    sys.exit(main())
