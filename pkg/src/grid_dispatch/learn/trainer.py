"""
Training loop for grid-dispatch

Episode loop for the constrained soft actor-critic, with or without SQIL
demonstrations, periodic deterministic evaluation, metrics CSV and checkpoint.
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd
from tqdm import tqdm

from ..env.dispatch_env import DispatchEnv
from ..env.transitions import Transition
from ..utils.helpers import atomic_write
from ..utils.logger import get_logger, log_training_event
from .agent import CsacAgent, CsacConfig, LossReport, save_checkpoint
from .replay import ReplayBuffer

logger = get_logger(__name__)

METRICS_COLUMNS = [
    "episode", "mean_reward", "mean_cost", "lambda",
    "q1_loss", "q2_loss", "v_loss", "pi_loss",
    "eval_reward", "eval_cost",
]

EnvFactory = Callable[[], DispatchEnv]


@dataclass
class TrainingConfig:
    """Episode loop settings"""
    episodes: int = 100
    warmup_steps: int = 256
    update_every: int = 1
    updates_per_step: int = 1
    eval_every: int = 10
    eval_episodes: int = 1
    buffer_capacity: int = 100_000
    seed: int = 0
    sqil: bool = False
    progress: bool = False

    def __post_init__(self):
        if self.episodes < 0:
            raise ValueError("Episode count must be non-negative")
        if self.update_every < 1 or self.updates_per_step < 0:
            raise ValueError("Update cadence must be positive")


@dataclass
class TrainingArtifact:
    agent: CsacAgent
    metrics: pd.DataFrame
    checkpoint_path: Optional[Path] = None
    metrics_path: Optional[Path] = None
    total_steps: int = 0


@dataclass
class EvaluationResult:
    """Deterministic rollouts of a policy"""
    rewards: List[float] = field(default_factory=list)
    costs: List[float] = field(default_factory=list)
    steps: List[int] = field(default_factory=list)

    @property
    def mean_reward(self) -> float:
        return float(np.mean(self.rewards)) if self.rewards else 0.0

    @property
    def mean_cost(self) -> float:
        return float(np.mean(self.costs)) if self.costs else 0.0


def rollout(env: DispatchEnv,
            policy: Callable[[np.ndarray], np.ndarray],
            seeds: Sequence[int],
            on_step: Optional[Callable[[int, int, float, float, Dict], None]] = None) -> EvaluationResult:
    """Run one episode per seed; per-episode totals of reward and cost"""
    result = EvaluationResult()
    for episode, seed in enumerate(seeds):
        state, _ = env.reset(seed=int(seed))
        total_reward = total_cost = 0.0
        steps = 0
        done = False
        while not done:
            state, reward, terminated, truncated, info = env.step(policy(state))
            if on_step is not None:
                on_step(episode, steps, reward, info["cost"], info)
            total_reward += reward
            total_cost += info["cost"]
            steps += 1
            done = terminated or truncated
        result.rewards.append(total_reward)
        result.costs.append(total_cost)
        result.steps.append(steps)
    return result


def _mean_losses(reports: List[LossReport]) -> Dict[str, float]:
    keys = ("q1_loss", "q2_loss", "v_loss", "pi_loss")
    if not reports:
        return {key: float("nan") for key in keys}
    return {key: float(np.mean([getattr(r, key) for r in reports])) for key in keys}


def train_run(env_factory: EnvFactory,
              agent_config: CsacConfig,
              training: TrainingConfig,
              demonstrations: Optional[Sequence[Transition]] = None,
              output_dir: Optional[Union[str, Path]] = None,
              config_hash: str = "") -> TrainingArtifact:
    """Train a CSAC agent; SQIL mode requires demonstrations"""
    if training.sqil and not demonstrations:
        raise ValueError("SQIL training requires demonstration transitions")
    if not training.sqil and demonstrations:
        raise ValueError("Demonstrations were given but SQIL mode is off")

    env = env_factory()
    eval_env = env_factory()
    agent = CsacAgent(env.obs_dim, env.n_batteries, agent_config, seed=training.seed)
    buffer = ReplayBuffer(env.obs_dim, env.n_batteries, capacity=training.buffer_capacity,
                          sqil=training.sqil, seed=training.seed)
    if training.sqil:
        buffer.load_demonstrations(demonstrations)

    explore = np.random.default_rng(training.seed)
    mode = "csac-sqil" if training.sqil else "csac"
    rows = []
    total_steps = 0

    logger.info(f"Training {mode} for {training.episodes} episodes (obs {env.obs_dim}, actions {env.n_batteries})")

    for episode in tqdm(range(training.episodes), desc=mode, disable=not training.progress):
        state, _ = env.reset(seed=training.seed + episode)
        agent.begin_episode()
        rewards, costs, reports = [], [], []
        done = False

        while not done:
            if total_steps < training.warmup_steps:
                action = explore.uniform(-1.0, 1.0, size=env.n_batteries)
            else:
                action = agent.act(state)

            next_state, reward, terminated, truncated, info = env.step(action)
            done = terminated or truncated
            buffer.add(state, action, agent_config.reward_scale * reward, info["cost"], next_state, terminated)
            rewards.append(reward)
            costs.append(info["cost"])
            state = next_state
            total_steps += 1

            if len(buffer) >= agent_config.batch_size and total_steps % training.update_every == 0:
                for _ in range(training.updates_per_step):
                    reports.append(agent.train_step(buffer.sample(agent_config.batch_size)))

        row = {
            "episode": episode + 1,
            "mean_reward": float(np.mean(rewards)),
            "mean_cost": float(np.mean(costs)),
            "lambda": agent.lam,
            **_mean_losses(reports),
            "eval_reward": float("nan"),
            "eval_cost": float("nan"),
        }

        if training.eval_every and (episode + 1) % training.eval_every == 0:
            seeds = [training.seed + 1_000_000 + k for k in range(training.eval_episodes)]
            evaluation = rollout(eval_env, lambda s: agent.act(s, deterministic=True), seeds)
            row["eval_reward"] = evaluation.mean_reward
            row["eval_cost"] = evaluation.mean_cost

        rows.append(row)
        log_training_event(episode + 1, {k: row[k] for k in ("mean_reward", "mean_cost", "lambda")}, mode=mode)

    metrics = pd.DataFrame.from_records(rows, columns=METRICS_COLUMNS)
    artifact = TrainingArtifact(agent=agent, metrics=metrics, total_steps=total_steps)

    if output_dir is not None:
        output_dir = Path(output_dir)
        artifact.metrics_path = write_metrics(metrics, output_dir / "metrics.csv")
        artifact.checkpoint_path = save_checkpoint(agent, output_dir / "checkpoint.json", config_hash)

    return artifact


def write_metrics(metrics: pd.DataFrame, path: Union[str, Path]) -> Path:
    return atomic_write(path, metrics.to_csv(index=False, float_format="%.10g"))


def episodes_to_threshold(metrics: pd.DataFrame,
                          threshold: float,
                          column: str = "mean_reward",
                          window: int = 1) -> Optional[int]:
    """First episode whose rolling mean of column reaches threshold, or None"""
    if metrics.empty:
        return None
    if column not in metrics.columns:
        raise KeyError(f"Metrics have no column {column!r}")

    smoothed = metrics[column].rolling(window, min_periods=window).mean()
    reached = metrics.loc[smoothed >= threshold, "episode"]
    return int(reached.iloc[0]) if not reached.empty else None


def make_policy(agent: CsacAgent) -> Callable[[np.ndarray], np.ndarray]:
    return lambda state: agent.act(state, deterministic=True)
