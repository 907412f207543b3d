"""
Tests for Command-Line Interface

Integration tests for the click command group on a small four-node configuration.
"""

import io
import json
import math
import sys
from pathlib import Path

import numpy as np
import pandas as pd
import pytest
from click.testing import CliRunner

sys.path.insert(0, str(Path(__file__).parent.parent / "src"))

from grid_dispatch.cli.aggregate import (SEED_COLUMNS, learning_episodes, ordering_checks, profit_threshold,
                                         seed_table, speed_ratio, summarize_seeds)
from grid_dispatch.cli.commands import COMPARISON_COLUMNS, cli
from grid_dispatch.env.transitions import load_transitions
from grid_dispatch.utils.logger import setup_logging

ROOT = Path(__file__).parent.parent
FOUR_NODE = ROOT / "data" / "feeders" / "four_node.json"


def write_config(tmp_path: Path, mode: str = "csac") -> Path:
    """Tiny run document: two batteries on the four-node chain"""
    text = f"""
run:
  mode: {mode}
  seed: 3
  output_dir: {tmp_path / 'run'}
feeder:
  path: {FOUR_NODE}
scenario:
  steps: 40
fleet:
  batteries:
    - {{id: b3, node: "3", phase: a}}
    - {{id: b4, node: "4", phase: a}}
market:
  capacity_kw: 10.0
env:
  episode_steps: 5
agent:
  hidden: [8]
  batch_size: 8
training:
  episodes: 3
  warmup_steps: 4
  eval_every: 0
  demo_episodes: 1
evaluation:
  episodes: 2
logging:
  level: WARNING
"""
    path = tmp_path / "config.yaml"
    path.write_text(text)
    return path


@pytest.fixture(autouse=True)
def restore_logging():
    """Point loguru back at the real stderr once the runner's streams are gone"""
    yield
    setup_logging("WARNING")


@pytest.fixture
def runner():
    return CliRunner()


class TestSignalAndPowerFlow:
    """Test cases for gen-signal and powerflow"""

    def test_gen_signal(self, runner, tmp_path):
        """Test a synthesized scenario CSV is written"""
        config = write_config(tmp_path)
        output = tmp_path / "signal.csv"
        result = runner.invoke(cli, ["--config", str(config), "gen-signal", "--steps", "12",
                                     "--output", str(output)])
        assert result.exit_code == 0, result.output

        frame = pd.read_csv(output)
        assert list(frame.columns) == ["t", "r", "price"]
        assert len(frame) == 12
        assert frame["r"].between(-1.0, 1.0).all()

    def test_powerflow_to_stdout(self, runner, tmp_path):
        """Test the voltage table is printed when no output path is given"""
        config = write_config(tmp_path)
        result = runner.invoke(cli, ["--config", str(config), "--log-level", "ERROR", "powerflow"])
        assert result.exit_code == 0, result.output

        frame = pd.read_csv(io.StringIO(result.output), dtype={"node": str})
        assert list(frame["node"]) == ["1", "2", "3", "4"]
        assert frame["v_mag_pu"].iloc[3] == pytest.approx(np.sqrt(0.9916))

    def test_powerflow_with_injections(self, runner, tmp_path):
        """Test injections, sweep method, output and plot paths"""
        config = write_config(tmp_path)
        injections = tmp_path / "injections.csv"
        injections.write_text("node,phase,p_pu,q_pu\n4,a,0.05,0.0\n")
        output = tmp_path / "voltages.csv"
        plot = tmp_path / "profile.svg"

        result = runner.invoke(cli, ["--config", str(config), "powerflow", "--injections", str(injections),
                                     "--output", str(output), "--plot", str(plot)])
        assert result.exit_code == 0, result.output
        frame = pd.read_csv(output, dtype={"node": str})
        assert frame["v_mag_pu"].iloc[3] == pytest.approx(np.sqrt(0.9946))
        assert plot.read_text().lstrip().startswith("<?xml")

        sweep = tmp_path / "sweep.csv"
        result = runner.invoke(cli, ["--config", str(config), "powerflow", "--method", "sweep",
                                     "--output", str(sweep)])
        assert result.exit_code == 0, result.output
        assert pd.read_csv(sweep)["v_mag_pu"].iloc[3] == pytest.approx(np.sqrt(0.9916), abs=1e-3)

    def test_missing_config(self, runner, tmp_path):
        """Test a missing configuration exits with status 1"""
        result = runner.invoke(cli, ["--config", str(tmp_path / "absent.yaml"), "powerflow"])
        assert result.exit_code == 1


class TestTrainEvaluateCompare:
    """Test cases for train, evaluate and compare"""

    def test_train_rejects_expert_mode(self, runner, tmp_path):
        """Test train refuses the milp mode"""
        config = write_config(tmp_path, mode="milp")
        result = runner.invoke(cli, ["--config", str(config), "train"])
        assert result.exit_code == 1

    def test_train_then_evaluate(self, runner, tmp_path):
        """Test a short training run produces metrics, a checkpoint and an evaluation summary"""
        config = write_config(tmp_path)
        run_dir = tmp_path / "run"

        result = runner.invoke(cli, ["--config", str(config), "train"])
        assert result.exit_code == 0, result.output
        for name in ("config.yaml", "metrics.csv", "checkpoint.json", "reward_curve.svg", "violation_curve.svg"):
            assert (run_dir / name).exists(), name
        assert len(pd.read_csv(run_dir / "metrics.csv")) == 3

        eval_dir = tmp_path / "eval"
        result = runner.invoke(cli, ["--config", str(config), "evaluate",
                                     "--checkpoint", str(run_dir / "checkpoint.json"),
                                     "--output", str(eval_dir)])
        assert result.exit_code == 0, result.output

        evaluation = pd.read_csv(eval_dir / "evaluation.csv")
        assert list(evaluation.columns) == ["episode", "seed", "profit", "violations", "steps"]
        assert list(evaluation["seed"]) == [1_000_003, 1_000_004]
        assert list(evaluation["steps"]) == [5, 5]

        summary = json.loads((eval_dir / "summary.json").read_text())
        assert summary["mode"] == "csac"
        assert summary["seed"] == 3
        assert summary["episodes"] == 2
        assert summary["wall_time"]["decision_time_s"] > 0
        assert len(pd.read_csv(eval_dir / "trajectories.csv")) == 10
        assert (eval_dir / "evaluation_violations.svg").read_text().lstrip().startswith("<?xml")

    def test_evaluate_expert(self, runner, tmp_path):
        """Test the expert mode evaluates without a checkpoint"""
        config = write_config(tmp_path, mode="milp")
        eval_dir = tmp_path / "eval"
        result = runner.invoke(cli, ["--config", str(config), "evaluate", "--output", str(eval_dir)])
        assert result.exit_code == 0, result.output

        summary = json.loads((eval_dir / "summary.json").read_text())
        assert summary["mode"] == "milp"
        assert summary["avg_violations_per_step"] == 0.0
        assert (eval_dir / "evaluation_violations.svg").exists()

    def test_sqil_demonstrations_keyed_by_seed(self, runner, tmp_path):
        """Test cached demonstrations are reused only for the same seed and settings"""
        config = write_config(tmp_path, mode="csac-sqil")
        run_dir = tmp_path / "run"
        for seed in ("3", "4", "3"):
            result = runner.invoke(cli, ["--config", str(config), "--seed", seed, "train", "--episodes", "1"])
            assert result.exit_code == 0, result.output

        cached = sorted(run_dir.glob("demos-*.npz"))
        assert len(cached) == 2
        assert not (run_dir / "demos.npz").exists()

    def test_invalid_fleet_exits(self, runner, tmp_path):
        """Test a battery rejected at assembly exits with status 1"""
        config = write_config(tmp_path)
        config.write_text(config.read_text().replace('{id: b4, node: "4", phase: a}',
                                                     '{id: b4, node: "4", phase: a, soc_min: 0.6}'))
        result = runner.invoke(cli, ["--config", str(config), "gen-demos", "--output", str(tmp_path / "d.npz")])
        assert result.exit_code == 1
        assert not (tmp_path / "d.npz").exists()

    @pytest.mark.slow
    def test_compare_aggregates_seeds(self, runner, tmp_path):
        """Test expert, SQIL and CSAC runs over two seeds are aggregated per seed"""
        run_dirs = []
        for mode in ("milp", "csac-sqil", "csac"):
            (tmp_path / mode).mkdir()
            config = write_config(tmp_path / mode, mode=mode)
            for seed in (3, 4):
                run_dir = tmp_path / f"{mode}-{seed}"
                args = ["--config", str(config), "--seed", str(seed)]
                evaluate_args = ["evaluate", "--output", str(run_dir)]
                if mode != "milp":
                    result = runner.invoke(cli, args + ["train", "--output", str(run_dir)])
                    assert result.exit_code == 0, result.output
                    evaluate_args += ["--checkpoint", str(run_dir / "checkpoint.json")]
                result = runner.invoke(cli, args + evaluate_args)
                assert result.exit_code == 0, result.output
                run_dirs.append(str(run_dir))

        output = tmp_path / "comparison"
        result = runner.invoke(cli, ["compare", *run_dirs, "--output", str(output)])
        assert result.exit_code == 0, result.output

        seeds = pd.read_csv(output / "seeds.csv")
        assert list(seeds.columns) == SEED_COLUMNS
        assert list(seeds["seed"]) == [3, 4]
        assert (seeds["speed_ratio"] > 0).all()
        assert seeds["sqil_episodes"].notna().all()
        assert "## Seeds (2)" in (output / "comparison.md").read_text()

    def test_evaluate_missing_checkpoint(self, runner, tmp_path):
        """Test evaluating a learning mode without a checkpoint fails cleanly"""
        config = write_config(tmp_path)
        result = runner.invoke(cli, ["--config", str(config), "evaluate",
                                     "--checkpoint", str(tmp_path / "absent.json")])
        assert result.exit_code == 1

    def test_compare_identical_runs(self, runner, tmp_path):
        """Test comparing a run with itself gives zero deltas"""
        summary = {"mode": "csac", "avg_profit": 1.5, "avg_violations_per_step": 0.25,
                   "wall_time": {"decision_time_s": 0.001}}
        for name in ("a", "b"):
            (tmp_path / name).mkdir()
            (tmp_path / name / "summary.json").write_text(json.dumps(summary))

        output = tmp_path / "comparison"
        result = runner.invoke(cli, ["compare", str(tmp_path / "a"), str(tmp_path / "b"),
                                     "--output", str(output)])
        assert result.exit_code == 0, result.output

        frame = pd.read_csv(output / "comparison.csv")
        assert list(frame.columns) == COMPARISON_COLUMNS
        assert list(frame["run"]) == ["a", "b"]
        assert frame["profit_delta"].tolist() == [0.0, 0.0]
        assert frame["violation_delta"].tolist() == [0.0, 0.0]
        assert (output / "comparison.md").read_text().startswith("| run |")

    def test_compare_needs_two_runs(self, runner, tmp_path):
        """Test a single run directory is refused"""
        result = runner.invoke(cli, ["compare", str(tmp_path)])
        assert result.exit_code == 1

    def test_compare_missing_summary(self, runner, tmp_path):
        """Test unevaluated runs are reported"""
        (tmp_path / "a").mkdir()
        (tmp_path / "b").mkdir()
        result = runner.invoke(cli, ["compare", str(tmp_path / "a"), str(tmp_path / "b"),
                                     "--output", str(tmp_path / "out")])
        assert result.exit_code == 1


class TestExpertCommands:
    """Test cases for solve-opf and gen-demos"""

    def test_solve_opf(self, runner, tmp_path):
        """Test a short receding-horizon schedule is written"""
        config = write_config(tmp_path, mode="milp")
        output = tmp_path / "opf"
        result = runner.invoke(cli, ["--config", str(config), "solve-opf", "--steps", "3",
                                     "--output", str(output)])
        assert result.exit_code == 0, result.output

        schedule = pd.read_csv(output / "schedule.csv")
        assert list(schedule.columns) == ["t", "battery", "p_kw"]
        assert len(schedule) == 6
        assert sorted(schedule["battery"].unique()) == ["b3", "b4"]

    def test_gen_demos(self, runner, tmp_path):
        """Test expert demonstrations are saved"""
        config = write_config(tmp_path)
        output = tmp_path / "demos.npz"
        result = runner.invoke(cli, ["--config", str(config), "gen-demos", "--output", str(output)])
        assert result.exit_code == 0, result.output

        demos = load_transitions(output)
        assert 0 < len(demos) <= 5
        assert demos[0].state.shape == (2 + 3 + 3 * 3,)


class TestComparisonChecks:
    """Test cases for ordering_checks and speed_ratio"""

    @staticmethod
    def row(mode, profit, violations, seconds):
        return {"mode": mode, "avg_profit": profit, "avg_violations_per_step": violations,
                "decision_time_s": seconds}

    def test_expected_ordering(self):
        """Test all checks pass for the expected ordering"""
        rows = [self.row("milp", 3.0, 0.0, 0.5), self.row("csac-sqil", 2.0, 0.1, 0.001),
                self.row("csac", 1.0, 0.3, 0.002)]
        checks = ordering_checks(rows)
        assert all(checks.values())
        assert speed_ratio(rows) == pytest.approx(500.0)

    def test_failed_and_absent_checks(self):
        """Test failures are False and missing modes are None"""
        rows = [self.row("csac-sqil", 1.0, 0.5, 0.001), self.row("csac", 2.0, 0.1, 0.001)]
        checks = ordering_checks(rows)
        assert checks["profit milp >= csac-sqil"] is None
        assert checks["profit csac-sqil >= csac"] is False
        assert checks["violations csac-sqil <= csac"] is False
        assert speed_ratio(rows) is None


def training_metrics(reached, episodes=10, column="eval_reward"):
    """Metrics whose column jumps from 1.0 to 9.5 at the given episode (never when None)"""
    values = [1.0 if reached is None or k < reached else 9.5 for k in range(1, episodes + 1)]
    frame = pd.DataFrame({"episode": range(1, episodes + 1), "mean_reward": 0.0, "eval_reward": np.nan})
    frame[column] = values
    return frame


class TestSeedAggregation:
    """Test cases for seed_table and summarize_seeds"""

    @staticmethod
    def row(mode, seed, profit, violations, seconds):
        return {"run": f"{mode}-{seed}", "run_dir": f"runs/{mode}-{seed}", "mode": mode, "seed": seed,
                "avg_profit": profit, "avg_profit_per_step": profit / 10, "avg_violations_per_step": violations,
                "decision_time_s": seconds}

    @pytest.fixture
    def runs(self):
        sqil_reached = [2, 2, 3, 4, None]
        csac_reached = [6, 8, None, 7, 10]
        sqil_profit = [8.0, 8.0, 8.0, 8.0, 5.0]
        csac_profit = [6.0, 6.0, 6.0, 9.0, 6.0]
        sqil_violations = [0.0, 0.0, 0.0, 0.0, 0.2]

        rows, metrics = [], {}
        for seed in range(5):
            rows.append(self.row("milp", seed, 10.0, 0.0, 0.05))
            rows.append(self.row("csac-sqil", seed, sqil_profit[seed], sqil_violations[seed], 0.001))
            rows.append(self.row("csac", seed, csac_profit[seed], 0.1, 0.002))
            metrics[f"runs/csac-sqil-{seed}"] = training_metrics(sqil_reached[seed])
            metrics[f"runs/csac-{seed}"] = training_metrics(csac_reached[seed])
        return rows, metrics

    def test_seed_table(self, runs):
        """Test per-seed episodes to the expert threshold and ordering flags"""
        table = seed_table(*runs)
        assert list(table.columns) == SEED_COLUMNS
        assert list(table["seed"]) == [0, 1, 2, 3, 4]
        assert list(table["sqil_episodes"]) == [2.0, 2.0, 3.0, 4.0, math.inf]
        assert list(table["csac_episodes"]) == [6.0, 8.0, math.inf, 7.0, 10.0]
        assert [bool(v) for v in table["profit_order"]] == [True, True, True, False, False]
        assert [bool(v) for v in table["violation_order"]] == [True, True, True, True, False]
        np.testing.assert_allclose(table["speed_ratio"], 50.0)

    def test_summary(self, runs):
        """Test medians, seed counts and the pass/fail of each check"""
        summary = summarize_seeds(seed_table(*runs))
        assert summary["seeds"] == 5
        assert summary["required_seeds"] == 4
        assert summary["median_sqil_episodes"] == 3.0
        assert summary["median_csac_episodes"] == 8.0
        assert summary["learning_ratio"] == pytest.approx(0.375)
        assert summary["profit_order_seeds"] == 3
        assert summary["violation_order_seeds"] == 4
        assert list(summary["checks"].values()) == [True, False, True, True]

    def test_missing_expert(self, runs):
        """Test seeds without an expert run leave episodes and checks undecided"""
        rows, metrics = runs
        learners = [row for row in rows if row["mode"] != "milp"]
        table = seed_table(learners, metrics)
        assert table["sqil_episodes"].isna().all()
        assert table["speed_ratio"].isna().all()

        summary = summarize_seeds(table)
        assert summary["learning_ratio"] is None
        checks = list(summary["checks"].values())
        assert checks[0] is None
        assert checks[1] is None
        assert checks[3] is None

    def test_step_reward_fallback(self):
        """Test runs without periodic evaluation compare mean step reward to the expert's per-step profit"""
        metrics = training_metrics(3, episodes=5, column="mean_reward")
        expert = {"avg_profit": 95.0, "avg_profit_per_step": 9.5}
        assert learning_episodes(metrics, expert) == 3.0
        assert learning_episodes(training_metrics(None, column="mean_reward"), expert) == math.inf
        assert math.isnan(learning_episodes(None, expert))

    def test_negative_expert_profit(self):
        """Test the threshold sits below a negative expert profit"""
        assert profit_threshold(10.0) == pytest.approx(9.0)
        assert profit_threshold(-10.0) == pytest.approx(-11.0)
