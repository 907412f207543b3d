"""
Expert demonstrations for grid-dispatch

Receding-horizon expert acting inside the dispatch environment, and the rollout
that turns its decisions into imitation transitions.
"""

from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from ..env.dispatch_env import DispatchEnv
from ..env.transitions import Transition
from ..utils.helpers import Stopwatch
from ..utils.logger import get_logger
from .dispatcher import DispatchSchedule, solve_dispatch
from .problem import DEFAULT_VOLTAGE_MARGIN, DispatchProblem

logger = get_logger(__name__)


@dataclass
class ExpertDecision:
    """Environment action chosen by the expert plus the schedule behind it"""
    action: np.ndarray
    schedule: DispatchSchedule

    @property
    def feasible(self) -> bool:
        return self.schedule.optimal


class ExpertPolicy:
    """Solves a one-step (or short look-ahead) dispatch at every environment step"""

    def __init__(self,
                 horizon: int = 1,
                 voltage_margin: float = DEFAULT_VOLTAGE_MARGIN,
                 node_limit: int = 5000):
        if horizon < 1:
            raise ValueError("Expert horizon must be at least one step")
        self.horizon = horizon
        self.voltage_margin = voltage_margin
        self.node_limit = node_limit
        self.timer = Stopwatch()
        self.infeasible_steps = 0

    def problem_for(self, env: DispatchEnv) -> DispatchProblem:
        window = min(self.horizon, len(env.episode) - env.t)
        return DispatchProblem(
            feeder=env.feeder,
            specs=env.specs,
            energies=env.fleet.energies.copy(),
            duration_h=env.duration_h,
            instructions=env.episode.instructions[env.t:env.t + window],
            prices=env.episode.prices[env.t:env.t + window],
            account=env.account,
            start_step=env.fleet.step,
            voltage_margin=self.voltage_margin,
        )

    def decide(self, env: DispatchEnv) -> ExpertDecision:
        with self.timer:
            schedule = solve_dispatch(self.problem_for(env), node_limit=self.node_limit)

        if not schedule.optimal:
            self.infeasible_steps += 1
            logger.warning(
                f"Expert step {env.t} of {env.episode.id}: {schedule.status.value}, using zero action"
            )
            return ExpertDecision(action=np.zeros(env.n_batteries), schedule=schedule)

        action = env.power_to_action(schedule.charging_powers(0))
        return ExpertDecision(action=action, schedule=schedule)

    def act(self, env: DispatchEnv) -> np.ndarray:
        return self.decide(env).action

    @property
    def mean_solve_time(self) -> float:
        return self.timer.mean


def generate_demonstrations(env: DispatchEnv,
                            episodes: int,
                            seed: int = 0,
                            policy: Optional[ExpertPolicy] = None) -> List[Transition]:
    """Roll the expert through seeded episodes; every kept transition has reward +1"""
    policy = policy or ExpertPolicy()
    transitions: List[Transition] = []
    skipped = 0

    for episode in range(episodes):
        state, _ = env.reset(seed=seed + episode)
        done = False
        while not done:
            decision = policy.decide(env)
            next_state, _, terminated, truncated, info = env.step(decision.action)
            done = terminated or truncated

            if not decision.feasible:
                skipped += 1
            else:
                transitions.append(Transition(
                    state=state,
                    action=decision.action.copy(),
                    reward=1.0,
                    cost=float(info["cost"]),
                    next_state=next_state,
                    done=done,
                    demo=True,
                ))
            state = next_state

        logger.info(f"Demonstration episode {episode + 1}/{episodes} complete ({len(transitions)} transitions)")

    if skipped:
        logger.warning(f"Skipped {skipped} infeasible expert steps while generating demonstrations")

    return transitions
