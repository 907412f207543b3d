"""
Command-line interface for grid-dispatch

Click command group: train, evaluate, compare, solve-opf, powerflow, gen-signal
and gen-demos. Library errors are logged and turned into exit status 1.
"""

import functools
import json
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

import click
import numpy as np
import pandas as pd
from rich.console import Console
from rich.table import Table

from ..env.transitions import TrajectoryLogger, load_transitions, save_transitions
from ..exceptions import ConfigError, GridDispatchError
from ..expert.demonstrations import generate_demonstrations
from ..expert.dispatcher import solve_receding_horizon
from ..grid.feeder import InjectionSet, load_injections
from ..grid.power_flow import count_violations, solve_linear, solve_nonlinear_sweep
from ..learn.agent import load_checkpoint
from ..learn.trainer import rollout, train_run
from ..market.scenario import save_scenario, synthesize_scenario
from ..utils.helpers import Stopwatch, atomic_write
from ..utils.logger import get_logger, setup_logging
from . import runtime
from .aggregate import SEED_COLUMNS, ordering_checks, seed_table, speed_ratio, summarize_seeds
from .config import DEFAULT_CONFIG_PATH, RunConfig, config_hash, demos_key, dump_config, load_config
from .plots import plot_training_curves, plot_violation_curve, plot_voltage_profile

logger = get_logger(__name__)

EVALUATION_COLUMNS = ["episode", "seed", "profit", "violations", "steps"]
COMPARISON_COLUMNS = ["run", "mode", "avg_profit", "avg_violations_per_step",
                      "decision_time_s", "profit_delta", "violation_delta"]

console = Console()


def handle_errors(func):
    """Log library errors and exit with status 1"""

    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except GridDispatchError as e:
            logger.error(f"{func.__name__.replace('_', '-')} failed [{e.code}]: {e}")
            sys.exit(1)

    return wrapper


class CliContext:
    """Lazily loaded configuration shared by subcommands"""

    def __init__(self, config_path: str, seed: Optional[int], log_level: Optional[str]):
        self.config_path = config_path
        self.seed = seed
        self.log_level = log_level
        self._config: Optional[RunConfig] = None

    @property
    def config(self) -> RunConfig:
        if self._config is None:
            config = load_config(self.config_path)
            if self.seed is not None:
                config.run.seed = self.seed
            setup_logging(self.log_level or config.logging.level, config.logging.file)
            self._config = config
        return self._config

    def output_dir(self, override: Optional[str] = None) -> Path:
        path = Path(override or self.config.run.output_dir)
        path.mkdir(parents=True, exist_ok=True)
        return path


def _write_json(path: Path, payload: Dict[str, Any]) -> Path:
    return atomic_write(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


@click.group()
@click.option("--config", "config_path", default=DEFAULT_CONFIG_PATH, show_default=True,
              help="Run configuration (YAML)")
@click.option("--seed", type=int, default=None, help="Override run.seed")
@click.option("--log-level", type=click.Choice(["DEBUG", "INFO", "WARNING", "ERROR"]), default=None)
@click.pass_context
def cli(ctx, config_path: str, seed: Optional[int], log_level: Optional[str]):
    """Battery fleet frequency regulation on distribution feeders"""
    setup_logging(log_level or "INFO")
    ctx.obj = CliContext(config_path, seed, log_level)


@cli.command()
@click.option("--episodes", type=int, default=None, help="Override training.episodes")
@click.option("--output", type=click.Path(file_okay=False), default=None)
@click.pass_obj
@handle_errors
def train(obj: CliContext, episodes: Optional[int], output: Optional[str]):
    """Train a csac or csac-sqil agent"""
    config = obj.config
    if not config.is_learning:
        raise ConfigError(f"train applies to learning modes only, run.mode is {config.run.mode}")

    output_dir = obj.output_dir(output)
    atomic_write(output_dir / "config.yaml", dump_config(config))

    demos = None
    if config.run.mode == "csac-sqil":
        demos = _demonstrations(config, output_dir)

    artifact = train_run(
        runtime.env_factory(config),
        runtime.agent_config(config),
        runtime.training_config(config, episodes),
        demonstrations=demos,
        output_dir=output_dir,
        config_hash=config_hash(config),
    )
    if not artifact.metrics.empty:
        plot_training_curves(artifact.metrics, output_dir)

    console.print(f"Trained {len(artifact.metrics)} episodes ({artifact.total_steps} steps); "
                  f"checkpoint at {artifact.checkpoint_path}")


def _demonstrations(config: RunConfig, output_dir: Path):
    if config.training.demos_path:
        path = Path(config.training.demos_path)
    else:
        path = output_dir / f"demos-{demos_key(config)[:12]}.npz"
    if path.exists():
        demos = load_transitions(path)
        logger.info(f"Using {len(demos)} cached demonstrations from {path}")
        return demos
    if not config.expert.enabled:
        raise ConfigError(f"No demonstrations at {path} and the expert is disabled")

    env = runtime.env_factory(config)()
    demos = generate_demonstrations(env, config.training.demo_episodes, seed=config.run.seed,
                                    policy=runtime.expert_policy(config))
    if not demos:
        raise ConfigError("Expert produced no feasible demonstrations")
    save_transitions(demos, path)
    return demos


@cli.command()
@click.option("--checkpoint", type=click.Path(dir_okay=False), default=None)
@click.option("--output", type=click.Path(file_okay=False), default=None)
@click.pass_obj
@handle_errors
def evaluate(obj: CliContext, checkpoint: Optional[str], output: Optional[str]):
    """Deterministic rollouts on the held-out scenario"""
    config = obj.config
    seeds = runtime.evaluation_seeds(config)
    if not seeds:
        raise ConfigError("evaluation.episodes is 0; nothing to evaluate")

    output_dir = obj.output_dir(output)
    env = runtime.env_factory(config, held_out=True)()
    timer = Stopwatch()

    if config.run.mode == "milp":
        expert = runtime.expert_policy(config)

        def policy(state):
            with timer:
                return expert.act(env)
    else:
        path = checkpoint or config.evaluation.checkpoint or str(Path(config.run.output_dir) / "checkpoint.json")
        agent = load_checkpoint(path, config_hash=config_hash(config),
                                obs_dim=env.obs_dim, act_dim=env.n_batteries)

        def policy(state):
            with timer:
                return agent.act(state, deterministic=True)

    trajectories = TrajectoryLogger()
    result = rollout(env, policy, seeds,
                     on_step=lambda ep, t, r, c, info: trajectories.record(ep, t, r, c, info))

    frame = pd.DataFrame({
        "episode": np.arange(len(seeds)),
        "seed": list(seeds),
        "profit": result.rewards,
        "violations": result.costs,
        "steps": result.steps,
    }, columns=EVALUATION_COLUMNS)
    atomic_write(output_dir / "evaluation.csv", frame.to_csv(index=False, float_format="%.10g"))
    trajectories.write(output_dir / "trajectories.csv")
    plot_violation_curve(frame, output_dir / "evaluation_violations.svg")

    total_steps = int(np.sum(result.steps))
    summary = {
        "mode": config.run.mode,
        "seed": config.run.seed,
        "episodes": len(seeds),
        "config_hash": config_hash(config),
        "avg_profit": result.mean_reward,
        "avg_profit_per_step": float(np.sum(result.rewards)) / total_steps if total_steps else 0.0,
        "avg_violations_per_episode": result.mean_cost,
        "avg_violations_per_step": float(np.sum(result.costs)) / total_steps if total_steps else 0.0,
        "wall_time": {
            "decision_time_s": timer.mean,
            "total_decision_time_s": timer.total,
        },
    }
    _write_json(output_dir / "summary.json", summary)

    console.print(f"{config.run.mode}: profit {summary['avg_profit']:.4f}, "
                  f"violations/step {summary['avg_violations_per_step']:.4f}, "
                  f"decision {timer.mean * 1e3:.3f} ms")


def _read_summary(run_dir: Path) -> Dict[str, Any]:
    path = run_dir / "summary.json"
    try:
        with open(path, "r") as f:
            return json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise GridDispatchError(f"Missing or unreadable run artifact {path}: {e}", code="MISSING_ARTIFACT")


def _read_metrics(run_dir: Path) -> Optional[pd.DataFrame]:
    path = run_dir / "metrics.csv"
    if not path.exists():
        return None
    try:
        return pd.read_csv(path)
    except (OSError, pd.errors.ParserError) as e:
        raise GridDispatchError(f"Unreadable run artifact {path}: {e}", code="MISSING_ARTIFACT")


def _flag(passed: Optional[bool]) -> str:
    return "n/a" if passed is None else ("PASS" if passed else "FAIL")


def _cell(value: Any) -> str:
    return f"{value:.6g}" if isinstance(value, float) else str(value)


@cli.command()
@click.argument("run_dirs", nargs=-1, type=click.Path(file_okay=False))
@click.option("--output", type=click.Path(file_okay=False), default="runs/comparison", show_default=True)
@handle_errors
def compare(run_dirs, output: str):
    """Tabulate evaluated runs, check their ordering and aggregate over seeds"""
    if len(run_dirs) < 2:
        raise ConfigError("compare needs at least two run directories")

    rows = []
    metrics: Dict[str, pd.DataFrame] = {}
    for run_dir in run_dirs:
        summary = _read_summary(Path(run_dir))
        rows.append({
            "run": Path(run_dir).name,
            "run_dir": str(run_dir),
            "mode": summary["mode"],
            "seed": summary.get("seed"),
            "avg_profit": float(summary["avg_profit"]),
            "avg_profit_per_step": summary.get("avg_profit_per_step"),
            "avg_violations_per_step": float(summary["avg_violations_per_step"]),
            "decision_time_s": float(summary.get("wall_time", {}).get("decision_time_s", 0.0)),
        })
        run_metrics = _read_metrics(Path(run_dir))
        if run_metrics is not None:
            metrics[str(run_dir)] = run_metrics
    for row in rows:
        row["profit_delta"] = row["avg_profit"] - rows[0]["avg_profit"]
        row["violation_delta"] = row["avg_violations_per_step"] - rows[0]["avg_violations_per_step"]

    frame = pd.DataFrame.from_records(rows, columns=COMPARISON_COLUMNS)
    output_dir = Path(output)
    atomic_write(output_dir / "comparison.csv", frame.to_csv(index=False, float_format="%.10g"))

    checks = ordering_checks(rows)
    ratio = speed_ratio(rows)

    seeds, seed_summary = None, None
    if all(row["seed"] is not None for row in rows):
        seeds = seed_table(rows, metrics)
        seed_summary = summarize_seeds(seeds)
        atomic_write(output_dir / "seeds.csv", seeds.to_csv(index=False, float_format="%.10g"))
    else:
        logger.info("Some runs carry no seed; skipping the per-seed aggregation")

    atomic_write(output_dir / "comparison.md", _markdown(frame, checks, ratio, seeds, seed_summary))

    table = Table(title="Run comparison")
    for column in COMPARISON_COLUMNS:
        table.add_column(column)
    for row in rows:
        table.add_row(*[_cell(row[c]) for c in COMPARISON_COLUMNS])
    console.print(table)

    for name, passed in checks.items():
        console.print(f"{_flag(passed):>4}  {name}")
    if ratio is not None:
        console.print(f"speed ratio (milp / learned): {ratio:.1f}x")

    if seed_summary is not None:
        seed_view = Table(title=f"Per-seed aggregation ({seed_summary['seeds']} seeds)")
        for column in SEED_COLUMNS:
            seed_view.add_column(column)
        for record in seeds.itertuples(index=False):
            seed_view.add_row(*[_cell(value) for value in record])
        console.print(seed_view)
        for name, passed in seed_summary["checks"].items():
            console.print(f"{_flag(passed):>4}  {name}")


def _markdown(frame: pd.DataFrame,
              checks: Dict[str, Optional[bool]],
              ratio: Optional[float],
              seeds: Optional[pd.DataFrame] = None,
              seed_summary: Optional[Dict[str, Any]] = None) -> str:
    def table_lines(table: pd.DataFrame) -> List[str]:
        lines = ["| " + " | ".join(table.columns) + " |", "|" + "---|" * len(table.columns)]
        for record in table.itertuples(index=False):
            lines.append("| " + " | ".join(_cell(value) for value in record) + " |")
        return lines

    lines = table_lines(frame)
    lines.append("")
    for name, passed in checks.items():
        lines.append(f"- {_flag(passed)}: {name}")
    if ratio is not None:
        lines.append(f"- speed ratio (milp / learned): {ratio:.1f}x")

    if seeds is not None and seed_summary is not None:
        lines += ["", f"## Seeds ({seed_summary['seeds']})", ""]
        lines += table_lines(seeds)
        lines.append("")
        lines.append(f"- median episodes to threshold: csac-sqil {_cell(seed_summary['median_sqil_episodes'])}, "
                     f"csac {_cell(seed_summary['median_csac_episodes'])}")
        lines.append(f"- profit ordering holds in {seed_summary['profit_order_seeds']} seeds, "
                     f"violation ordering in {seed_summary['violation_order_seeds']}")
        for name, passed in seed_summary["checks"].items():
            lines.append(f"- {_flag(passed)}: {name}")
    return "\n".join(lines) + "\n"


@cli.command("solve-opf")
@click.option("--steps", type=int, default=None, help="Limit the scenario to its first N steps")
@click.option("--horizon", type=int, default=None, help="Look-ahead steps (default expert.horizon)")
@click.option("--size-capacity", is_flag=True, help="Let the capacity commitment float in [0, cap]")
@click.option("--output", type=click.Path(file_okay=False), default=None)
@click.pass_obj
@handle_errors
def solve_opf(obj: CliContext, steps: Optional[int], horizon: Optional[int], size_capacity: bool,
              output: Optional[str]):
    """Receding-horizon expert dispatch over the training scenario"""
    config = obj.config
    scenario = runtime.build_scenario(config)
    if steps is not None:
        scenario = scenario.window(0, min(steps, len(scenario)))

    result = solve_receding_horizon(
        runtime.build_feeder(config),
        runtime.build_fleet(config),
        scenario,
        runtime.build_account(config),
        horizon=horizon or config.expert.horizon,
        size_capacity=size_capacity,
        voltage_margin=config.expert.voltage_margin,
        node_limit=config.expert.node_limit,
    )

    output_dir = obj.output_dir(output)
    atomic_write(output_dir / "schedule.csv", result.to_frame().to_csv(index=False, float_format="%.10g"))
    console.print(f"objective {result.objective:.4f}, revenue {result.revenue:.4f}, "
                  f"violations {result.violations}, mean solve {result.mean_solve_time:.4f}s")


@cli.command()
@click.option("--injections", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--method", type=click.Choice(["linear", "sweep"]), default="linear", show_default=True)
@click.option("--output", type=click.Path(dir_okay=False), default=None, help="Voltage CSV path")
@click.option("--plot", type=click.Path(dir_okay=False), default=None, help="Voltage profile SVG path")
@click.pass_obj
@handle_errors
def powerflow(obj: CliContext, injections: Optional[str], method: str, output: Optional[str], plot: Optional[str]):
    """Voltage profile of the configured feeder"""
    feeder = runtime.build_feeder(obj.config)
    injection_set = load_injections(injections) if injections else InjectionSet()

    if method == "linear":
        solution = solve_linear(feeder, injection_set)
    else:
        solution = solve_nonlinear_sweep(feeder, injection_set)

    frame = solution.to_frame()
    csv_text = frame.to_csv(index=False, float_format="%.10g")
    if output:
        atomic_write(output, csv_text)
    else:
        click.echo(csv_text, nl=False)
    if plot:
        plot_voltage_profile(frame, plot, feeder.v_min, feeder.v_max)

    logger.info(f"{method} power flow: {count_violations(solution)} violations, "
                f"|V| in [{solution.min_voltage():.4f}, {solution.max_voltage():.4f}]")


@cli.command("gen-signal")
@click.option("--steps", type=int, default=None, help="Length (default scenario.steps)")
@click.option("--output", type=click.Path(dir_okay=False), required=True)
@click.pass_obj
@handle_errors
def gen_signal(obj: CliContext, steps: Optional[int], output: str):
    """Synthesize a regulation scenario CSV"""
    config = obj.config
    scenario = synthesize_scenario(config.run.seed, steps or config.scenario.steps,
                                   step_seconds=config.scenario.step_seconds)
    save_scenario(scenario, output)


@cli.command("gen-demos")
@click.option("--episodes", type=int, default=None, help="Episodes (default training.demo_episodes)")
@click.option("--output", type=click.Path(dir_okay=False), required=True)
@click.pass_obj
@handle_errors
def gen_demos(obj: CliContext, episodes: Optional[int], output: str):
    """Roll the expert through the environment and save its transitions"""
    config = obj.config
    env = runtime.env_factory(config)()
    demos = generate_demonstrations(env, episodes or config.training.demo_episodes,
                                    seed=config.run.seed, policy=runtime.expert_policy(config))
    if not demos:
        raise ConfigError("Expert produced no feasible demonstrations")
    save_transitions(demos, output)
    console.print(f"Saved {len(demos)} demonstration transitions to {output}")


def main():
    cli(prog_name="grid-dispatch")
