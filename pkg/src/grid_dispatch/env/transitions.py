"""
Transitions and trajectory logging for grid-dispatch
"""

import io
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Sequence, Union

import numpy as np
import pandas as pd

from ..utils.helpers import atomic_write
from ..utils.logger import get_logger

logger = get_logger(__name__)

TRAJECTORY_COLUMNS = ["episode", "t", "reward", "cost", "p_target", "p_response", "min_v", "max_v"]


@dataclass
class Transition:
    """One (s, a, r, c, s', done, demo) experience"""
    state: np.ndarray
    action: np.ndarray
    reward: float
    cost: float
    next_state: np.ndarray
    done: bool
    demo: bool = False


def discounted_return(rewards: Sequence[float], gamma: float) -> float:
    """Sum of gamma^i * r_i over the given remaining rewards"""
    if not 0 <= gamma <= 1:
        raise ValueError(f"Discount must lie in [0, 1], got {gamma}")

    total = 0.0
    for reward in reversed(list(rewards)):
        total = float(reward) + gamma * total
    return total


def save_transitions(transitions: Sequence[Transition], path: Union[str, Path]) -> Path:
    """Persist transitions as a compressed npz archive"""
    if not transitions:
        raise ValueError("No transitions to save")

    buffer = io.BytesIO()
    np.savez_compressed(
        buffer,
        states=np.stack([tr.state for tr in transitions]),
        actions=np.stack([tr.action for tr in transitions]),
        rewards=np.array([tr.reward for tr in transitions], dtype=float),
        costs=np.array([tr.cost for tr in transitions], dtype=float),
        next_states=np.stack([tr.next_state for tr in transitions]),
        dones=np.array([tr.done for tr in transitions], dtype=bool),
        demos=np.array([tr.demo for tr in transitions], dtype=bool),
    )
    path = atomic_write(path, buffer.getvalue())
    logger.info(f"Saved {len(transitions)} transitions to {path}")
    return path


def load_transitions(path: Union[str, Path]) -> List[Transition]:
    """Read transitions written by save_transitions"""
    with np.load(path) as archive:
        return [
            Transition(
                state=archive["states"][k],
                action=archive["actions"][k],
                reward=float(archive["rewards"][k]),
                cost=float(archive["costs"][k]),
                next_state=archive["next_states"][k],
                done=bool(archive["dones"][k]),
                demo=bool(archive["demos"][k]),
            )
            for k in range(archive["rewards"].shape[0])
        ]


class TrajectoryLogger:
    """Collects per-step rows for the trajectory CSV"""

    def __init__(self):
        self.rows: List[Dict[str, Any]] = []

    def record(self, episode: int, t: int, reward: float, cost: float, info: Dict[str, Any]):
        self.rows.append({
            "episode": int(episode),
            "t": int(t),
            "reward": float(reward),
            "cost": float(cost),
            "p_target": float(info["p_target"]),
            "p_response": float(info["p_response"]),
            "min_v": float(info["min_v"]),
            "max_v": float(info["max_v"]),
        })

    def __len__(self) -> int:
        return len(self.rows)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame.from_records(self.rows, columns=TRAJECTORY_COLUMNS)

    def write(self, path: Union[str, Path]) -> Path:
        return atomic_write(path, self.to_frame().to_csv(index=False, float_format="%.10g"))
