import json
from pathlib import Path

import numpy as np
import pytest

from mpcctraj import cli


def run_cli(args):
    return cli.main(args)


class TestSolveCommand:
    def test_pendulum_row_count_contract(self, tmp_path):
        out = tmp_path / "run"
        code = run_cli(["solve", "--example", "pendulum", "--ne", "50",
                        "--nc", "2", "--roots", "radau", "--out", str(out)])
        assert code == 0
        header, times, rows = cli.read_trajectory_csv(out / "trajectory.csv")
        assert len(times) == 50 * 2 + 1  # boundary-inclusive samples
        assert header[0] == "t"
        assert (out / "summary.json").exists()
        assert (out / "iterations.log").exists()

    def test_unknown_roots_value_exits_one(self, capsys):
        code = run_cli(["solve", "--example", "pendulum", "--roots", "cubic"])
        assert code == 1
        assert "error" in capsys.readouterr().err

    def test_missing_example_and_config_exits_one(self, capsys):
        code = run_cli(["solve"])
        assert code == 1

    def test_complementarity_summary_contract(self, tmp_path):
        out = tmp_path / "run"
        code = run_cli(["solve", "--example", "double_integrator",
                        "--nc", "3", "--out", str(out)])
        assert code == 0
        summary = json.loads((out / "summary.json").read_text())
        assert summary["status"] == "Optimal"
        assert summary["complementarity_residual"] == 0.0
        assert summary["problem_size"]["variables"] > 0

    def test_json_format(self, tmp_path):
        out = tmp_path / "run"
        code = run_cli(["solve", "--example", "double_integrator",
                        "--format", "json", "--out", str(out)])
        assert code == 0
        header, times, rows = cli.read_trajectory_json(out / "trajectory.json")
        assert header[0] == "t"
        assert len(times) > 0

    @pytest.mark.slow
    def test_pusher_fixed_delta_summary_contract(self, tmp_path):
        out = tmp_path / "run"
        code = run_cli(["solve", "--example", "pusher", "--relax", "per",
                        "--delta", "1e-6", "--out", str(out)])
        assert code == 0
        summary = json.loads((out / "summary.json").read_text())
        assert summary["complementarity_residual"] <= 1e-6 + 1e-8

    def test_incompatible_order_with_pairs_exits_one(self, capsys):
        code = run_cli(["solve", "--example", "pusher", "--nc", "2"])
        assert code == 1
        assert "error" in capsys.readouterr().err


class TestDeterminismAndRoundTrip:
    def test_outputs_byte_identical_across_runs(self, tmp_path):
        out1, out2 = tmp_path / "a", tmp_path / "b"
        for out in (out1, out2):
            code = run_cli(["solve", "--example", "double_integrator",
                            "--nc", "2", "--out", str(out)])
            assert code == 0
        assert (out1 / "trajectory.csv").read_bytes() \
            == (out2 / "trajectory.csv").read_bytes()
        assert (out1 / "iterations.log").read_bytes() \
            == (out2 / "iterations.log").read_bytes()

    def test_csv_round_trip_lossless(self, tmp_path):
        out = tmp_path / "run"
        run_cli(["solve", "--example", "double_integrator", "--nc", "2",
                 "--out", str(out)])
        path = out / "trajectory.csv"
        header, times, rows = cli.read_trajectory_csv(path)
        clone = tmp_path / "clone.csv"
        cli.write_trajectory_csv(clone, times, rows, header)
        assert clone.read_bytes() == path.read_bytes()
        header2, times2, rows2 = cli.read_trajectory_csv(clone)
        np.testing.assert_array_equal(times, times2)
        np.testing.assert_array_equal(rows, rows2)

    def test_json_round_trip_lossless(self, tmp_path):
        out = tmp_path / "run"
        run_cli(["solve", "--example", "double_integrator", "--format",
                 "json", "--out", str(out)])
        header, times, rows = cli.read_trajectory_json(out / "trajectory.json")
        clone = tmp_path / "clone.json"
        cli.write_trajectory_json(clone, times, rows, header)
        header2, times2, rows2 = cli.read_trajectory_json(clone)
        np.testing.assert_array_equal(times, times2)
        np.testing.assert_array_equal(rows, rows2)


class TestConfigFile:
    def test_example_config_with_overrides(self, tmp_path):
        cfg = tmp_path / "run.json"
        cfg.write_text(json.dumps({
            "example": "double_integrator",
            "overrides": {"n_elements": 8},
            "nc": 2,
            "out": str(tmp_path / "out"),
        }))
        code = run_cli(["solve", "--config", str(cfg)])
        assert code == 0
        header, times, rows = cli.read_trajectory_csv(
            tmp_path / "out" / "trajectory.csv")
        assert len(times) == 8 * 2 + 1

    def test_declarative_problem_with_obstacle_table(self, tmp_path):
        cfg = tmp_path / "prob.json"
        cfg.write_text(json.dumps({
            "problem": {
                "name": "point_dodge",
                "dynamics": "double_integrator",
                "n_states": 2, "n_controls": 1, "n_elements": 6,
                "t0": 0.0, "tf": 2.0,
                "x0": [0.0, 0.0],
                "goal": [1.0, 0.0],
                "bounds": {"u_lo": [-2.0], "u_hi": [2.0],
                           "x_final_lo": [1.0, 0.0], "x_final_hi": [1.0, 0.0]},
            },
            "nc": 2,
            "out": str(tmp_path / "out"),
        }))
        code = run_cli(["solve", "--config", str(cfg)])
        assert code == 0

    def test_bad_config_exits_one(self, tmp_path, capsys):
        cfg = tmp_path / "bad.json"
        cfg.write_text("{not json")
        assert run_cli(["solve", "--config", str(cfg)]) == 1

    def test_missing_config_file_exits_one(self, tmp_path):
        assert run_cli(["solve", "--config", str(tmp_path / "nope.json")]) == 1

    def test_cli_flags_override_config(self, tmp_path):
        cfg = tmp_path / "run.json"
        cfg.write_text(json.dumps({
            "example": "double_integrator",
            "nc": 1,
            "out": str(tmp_path / "o1"),
        }))
        code = run_cli(["solve", "--config", str(cfg), "--nc", "2",
                        "--out", str(tmp_path / "o2")])
        assert code == 0
        header, times, rows = cli.read_trajectory_csv(
            tmp_path / "o2" / "trajectory.csv")
        assert len(times) == 20 * 2 + 1  # nc=2 from the flag, ne=20 default


class TestBench:
    def test_empty_target_list_exits_one(self, capsys):
        assert run_cli(["bench"]) == 1

    def test_table_and_determinism(self, capsys):
        code = run_cli(["bench", "double_integrator", "--repeats", "2"])
        assert code == 0
        out = capsys.readouterr().out
        assert "double_integrator" in out
        assert "Optimal" in out

    def test_failed_target_reported_as_row(self, capsys):
        code = run_cli(["bench", "no_such_system", "--repeats", "1"])
        assert code == 0
        out = capsys.readouterr().out
        assert "failed" in out

    def test_identical_runs_identical_cost_and_iterations(self):
        from mpcctraj import api, systems

        a = api.solve_problem(systems.make_example("double_integrator"))
        b = api.solve_problem(systems.make_example("double_integrator"))
        assert a.objective == b.objective
        assert a.solution.iterations == b.solution.iterations
