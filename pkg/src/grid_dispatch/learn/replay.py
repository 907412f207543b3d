"""
Replay buffer for grid-dispatch

Two pools: a fixed demonstration pool whose rewards are always +1, and a ring
buffer of agent experience. In SQIL mode agent rewards are stored as 0 and
batches are drawn half from each pool.
"""

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ..env.transitions import Transition
from ..exceptions import EmptyBufferError, InsufficientDataError
from ..utils.logger import get_logger

logger = get_logger(__name__)

DEMO_REWARD = 1.0
AGENT_SQIL_REWARD = 0.0


@dataclass
class Batch:
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    costs: np.ndarray
    next_states: np.ndarray
    dones: np.ndarray
    demos: np.ndarray

    def __len__(self) -> int:
        return int(self.rewards.shape[0])

    @classmethod
    def concat(cls, first: "Batch", second: "Batch") -> "Batch":
        return cls(*(np.concatenate([a, b]) for a, b in zip(first.arrays(), second.arrays())))

    def arrays(self):
        return (self.states, self.actions, self.rewards, self.costs,
                self.next_states, self.dones, self.demos)


class _Pool:
    """Fixed-capacity ring of transitions"""

    def __init__(self, obs_dim: int, act_dim: int, capacity: int):
        self.capacity = int(capacity)
        self.states = np.zeros((self.capacity, obs_dim))
        self.actions = np.zeros((self.capacity, act_dim))
        self.rewards = np.zeros(self.capacity)
        self.costs = np.zeros(self.capacity)
        self.next_states = np.zeros((self.capacity, obs_dim))
        self.dones = np.zeros(self.capacity, dtype=bool)
        self.size = 0
        self.cursor = 0

    def add(self, state, action, reward, cost, next_state, done):
        k = self.cursor
        self.states[k] = state
        self.actions[k] = action
        self.rewards[k] = reward
        self.costs[k] = cost
        self.next_states[k] = next_state
        self.dones[k] = done
        self.cursor = (k + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def gather(self, idx: np.ndarray, demo: bool) -> Batch:
        return Batch(
            states=self.states[idx].copy(),
            actions=self.actions[idx].copy(),
            rewards=self.rewards[idx].copy(),
            costs=self.costs[idx].copy(),
            next_states=self.next_states[idx].copy(),
            dones=self.dones[idx].astype(float),
            demos=np.full(idx.shape[0], demo, dtype=bool),
        )


class ReplayBuffer:
    """Demonstration pool plus agent experience ring"""

    def __init__(self,
                 obs_dim: int,
                 act_dim: int,
                 capacity: int = 100_000,
                 sqil: bool = False,
                 seed: Optional[int] = None):
        if capacity < 1:
            raise ValueError("Replay capacity must be positive")

        self.obs_dim = obs_dim
        self.act_dim = act_dim
        self.sqil = sqil
        self.rng = np.random.default_rng(seed)
        self.agent = _Pool(obs_dim, act_dim, capacity)
        self.demo = _Pool(obs_dim, act_dim, 1)

    @property
    def n_demo(self) -> int:
        return self.demo.size

    @property
    def n_agent(self) -> int:
        return self.agent.size

    def __len__(self) -> int:
        return self.n_demo + self.n_agent

    def load_demonstrations(self, transitions: Sequence[Transition]):
        """Replace the demonstration pool; rewards are forced to +1"""
        pool = _Pool(self.obs_dim, self.act_dim, max(len(transitions), 1))
        for tr in transitions:
            pool.add(tr.state, tr.action, DEMO_REWARD, tr.cost, tr.next_state, tr.done)
        self.demo = pool
        logger.info(f"Loaded {pool.size} demonstration transitions")

    def add(self, state, action, reward: float, cost: float, next_state, done: bool):
        """Store one agent transition; reward becomes 0 in SQIL mode"""
        stored = AGENT_SQIL_REWARD if self.sqil else float(reward)
        self.agent.add(state, action, stored, cost, next_state, done)

    def sample(self, batch_size: int) -> Batch:
        """Uniform batch from the agent pool (or SQIL batch in SQIL mode)"""
        if self.sqil:
            return self.sqil_sample(batch_size)
        if self.n_agent < batch_size:
            raise InsufficientDataError(f"Buffer holds {self.n_agent} transitions, batch needs {batch_size}")

        idx = self.rng.integers(0, self.n_agent, size=batch_size)
        return self.agent.gather(idx, demo=False)

    def sqil_sample(self, batch_size: int) -> Batch:
        """Half demonstration, half agent transitions, uniform within each pool"""
        if batch_size % 2:
            raise ValueError(f"SQIL batch size must be even, got {batch_size}")
        if self.n_demo == 0 and self.n_agent == 0:
            raise EmptyBufferError("Both replay pools are empty")
        if len(self) < batch_size:
            raise InsufficientDataError(f"Buffer holds {len(self)} transitions, batch needs {batch_size}")

        if self.n_agent == 0:
            logger.warning(f"Agent pool empty, drawing all {batch_size} samples from demonstrations")
            return self.demo.gather(self.rng.integers(0, self.n_demo, size=batch_size), demo=True)
        if self.n_demo == 0:
            logger.warning(f"Demonstration pool empty, drawing all {batch_size} samples from agent pool")
            return self.agent.gather(self.rng.integers(0, self.n_agent, size=batch_size), demo=False)

        half = batch_size // 2
        demo = self.demo.gather(self.rng.integers(0, self.n_demo, size=half), demo=True)
        agent = self.agent.gather(self.rng.integers(0, self.n_agent, size=half), demo=False)
        return Batch.concat(demo, agent)
