"""
Dispatch environment for grid-dispatch

Constrained episodic environment: a fleet of feeder-connected batteries follows a
regulation instruction. Reward is market revenue minus aging cost; the constraint
cost is the number of voltage-limit violations after each step.

Observation layout (all float64):
    [soc * 2 - 1 per battery,
     feeder net demand / fleet rating,
     current target C*r / fleet rating,
     net active injection / fleet rating per non-source node-phase,
     net reactive injection / fleet rating per non-source node-phase,
     (|V| - 1) / 0.05 per non-source node-phase,
     2 * t / T - 1]
"""

from collections import deque
from dataclasses import replace
from typing import Any, Dict, List, Optional, Sequence

import gymnasium as gym
import numpy as np
from gymnasium import spaces

from ..bess.battery import BatterySpec, FleetState, check_placement
from ..grid.feeder import PHASE_INDEX, Feeder, InjectionSet
from ..grid.power_flow import PowerFlowSolution, count_violations, solve_linear
from ..market.scenario import RegulationScenario
from ..market.settlement import MarketAccount, aging_cost, step_revenue
from ..utils.logger import get_logger
from ..utils.validators import PHASES

logger = get_logger(__name__)

DEFAULT_EPISODE_STEPS = 450
VOLTAGE_SCALE = 0.05


class DispatchEnv(gym.Env):
    """Fleet regulation environment over a radial feeder"""

    metadata = {"render_modes": []}

    def __init__(self,
                 feeder: Feeder,
                 specs: Sequence[BatterySpec],
                 scenario: RegulationScenario,
                 account: MarketAccount,
                 episode_steps: int = DEFAULT_EPISODE_STEPS,
                 random_offset: bool = True):
        super().__init__()
        check_placement(feeder, specs)
        if episode_steps < 1:
            raise ValueError("Episodes need at least one step")

        self.feeder = feeder
        self.specs = tuple(specs)
        self.scenario = scenario
        self.episode_steps = int(episode_steps)
        self.random_offset = random_offset
        self._account_template = account

        self.node_phases = feeder.node_phases()
        self._rows = np.array([k for k, _ in self.node_phases], dtype=int)
        self._cols = np.array([ph for _, ph in self.node_phases], dtype=int)
        self._placement = [(feeder.node_index[s.node], PHASE_INDEX[s.phase]) for s in self.specs]

        self.fleet_rating_kw = float(sum(spec.power_kw for spec in self.specs))
        self._fleet_pu = self.fleet_rating_kw / feeder.base_kva

        m = len(self.specs)
        self.action_space = spaces.Box(low=-1.0, high=1.0, shape=(m,), dtype=np.float64)
        self.observation_space = spaces.Box(
            low=-np.inf, high=np.inf, shape=(self.obs_dim,), dtype=np.float64
        )

        self.account: Optional[MarketAccount] = None
        self.fleet: Optional[FleetState] = None
        self.episode: Optional[RegulationScenario] = None
        self.solution: Optional[PowerFlowSolution] = None
        self.injections_kw = np.zeros(m)
        self.t = 0
        self.offset = 0

    @property
    def n_batteries(self) -> int:
        return len(self.specs)

    @property
    def obs_dim(self) -> int:
        return self.n_batteries + 3 + 3 * len(self.node_phases)

    @property
    def horizon(self) -> int:
        return min(self.episode_steps, len(self.scenario))

    @property
    def duration_h(self) -> float:
        return self.scenario.duration_h

    @property
    def done(self) -> bool:
        return self.episode is not None and self.t >= len(self.episode)

    def observation_labels(self) -> List[str]:
        labels = [f"soc[{spec.id}]" for spec in self.specs]
        labels += ["net_demand", "target"]
        for prefix in ("p_inj", "q_inj", "v"):
            labels += [f"{prefix}[{self.feeder.nodes[k].id}.{PHASES[ph]}]" for k, ph in self.node_phases]
        labels.append("time")
        return labels

    def reset(self, *, seed: Optional[int] = None, options: Optional[Dict[str, Any]] = None):
        super().reset(seed=seed)

        length = self.horizon
        span = len(self.scenario) - length
        self.offset = int(self.np_random.integers(0, span + 1)) if self.random_offset and span > 0 else 0
        self.episode = self.scenario.window(self.offset, length)

        self.fleet = FleetState.initial(self.specs, self.duration_h)
        self.account = replace(self._account_template, history=deque())
        self.injections_kw = np.zeros(self.n_batteries)
        self.t = 0
        self.solution = solve_linear(self.feeder, self._injection_set())

        info = {
            "offset": self.offset,
            "scenario": self.episode.id,
            "baseline_violations": count_violations(self.solution),
        }
        return self.observe(), info

    def action_to_power(self, action: Sequence[float]) -> np.ndarray:
        """Affine map of [-1, 1] actions onto the feasible charging-positive range"""
        action = np.clip(np.asarray(action, dtype=float).reshape(-1), -1.0, 1.0)
        if action.shape != (self.n_batteries,):
            raise ValueError(f"Expected {self.n_batteries} actions, got {action.shape[0]}")

        ranges = self.fleet.power_ranges()
        mid = 0.5 * (ranges[:, 0] + ranges[:, 1])
        half = 0.5 * (ranges[:, 1] - ranges[:, 0])
        return np.clip(mid + half * action, ranges[:, 0], ranges[:, 1])

    def power_to_action(self, powers: Sequence[float]) -> np.ndarray:
        """Inverse of action_to_power; zero where the range is empty"""
        powers = np.asarray(powers, dtype=float)
        ranges = self.fleet.power_ranges()
        mid = 0.5 * (ranges[:, 0] + ranges[:, 1])
        half = 0.5 * (ranges[:, 1] - ranges[:, 0])
        action = np.zeros(self.n_batteries)
        active = half > 0
        action[active] = (powers[active] - mid[active]) / half[active]
        return np.clip(action, -1.0, 1.0)

    def step(self, action):
        if self.episode is None:
            raise RuntimeError("Call reset() before step()")
        if self.done:
            raise RuntimeError("Episode finished; call reset()")

        powers = self.action_to_power(action)
        self.fleet.advance(powers)
        self.injections_kw = -powers
        self.solution = solve_linear(self.feeder, self._injection_set())
        cost = count_violations(self.solution)

        instruction = float(self.episode.instructions[self.t])
        price = float(self.episode.prices[self.t])
        response = float(np.sum(self.injections_kw))
        performance = self.account.score(instruction, response)
        revenue = step_revenue(self.account, performance, price, self.duration_h)
        aging = aging_cost(powers, self.duration_h, self.account.aging_coefficient)
        self.account.record(performance)

        info = {
            "cost": cost,
            "t": self.t,
            "p_target": self.account.capacity_kw * instruction,
            "p_response": response,
            "performance": performance,
            "price": price,
            "revenue": revenue,
            "aging": aging,
            "min_v": self.solution.min_voltage(),
            "max_v": self.solution.max_voltage(),
            "powers_kw": powers.copy(),
        }

        self.t += 1
        terminated = self.t >= len(self.episode)
        return self.observe(), revenue - aging, terminated, False, info

    def _injection_set(self) -> InjectionSet:
        injections = InjectionSet()
        for spec, kw in zip(self.specs, self.injections_kw):
            injections.add(spec.node, spec.phase, kw / self.feeder.base_kva)
        return injections

    def observe(self) -> np.ndarray:
        """Observation vector for the current step"""
        feeder = self.feeder
        injected = np.zeros((feeder.n_nodes, 3), dtype=complex)
        for (k, ph), kw in zip(self._placement, self.injections_kw):
            injected[k, ph] += kw / feeder.base_kva
        nodal = injected - feeder.loads

        net_demand_kw = (feeder.total_load().real * feeder.base_kva - float(np.sum(self.injections_kw)))
        if self.t < len(self.episode):
            target_kw = self.account.capacity_kw * float(self.episode.instructions[self.t])
        else:
            target_kw = 0.0

        magnitudes = np.sqrt(self.solution.v_sq[self._rows, self._cols])
        parts = [
            2.0 * self.fleet.soc_fractions() - 1.0,
            [net_demand_kw / self.fleet_rating_kw, target_kw / self.fleet_rating_kw],
            nodal.real[self._rows, self._cols] / self._fleet_pu,
            nodal.imag[self._rows, self._cols] / self._fleet_pu,
            (magnitudes - 1.0) / VOLTAGE_SCALE,
            [2.0 * self.t / len(self.episode) - 1.0],
        ]
        return np.concatenate([np.asarray(part, dtype=float) for part in parts])
