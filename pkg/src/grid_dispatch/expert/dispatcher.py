"""
Expert dispatcher for grid-dispatch

Solves dispatch problems with the in-repo MILP and rolls receding-horizon
schedules over whole scenarios.
"""

import time
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Sequence

import numpy as np
import pandas as pd

from ..bess.battery import BatterySpec, FleetState
from ..exceptions import PerformanceGateError
from ..grid.feeder import Feeder, InjectionSet
from ..grid.power_flow import count_violations, solve_linear
from ..lp.branch_and_bound import solve_milp
from ..lp.problem import LpStatus
from ..market.scenario import RegulationScenario
from ..market.settlement import MarketAccount, step_revenue
from ..utils.logger import get_logger, log_solver_event
from .problem import DispatchProblem, build_problem

logger = get_logger(__name__)


class DispatchStatus(Enum):
    """Dispatch solve outcome"""
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    PERFORMANCE_GATED = "performance_gated"


@dataclass
class DispatchSchedule:
    """Per-battery per-step powers in kW, grid convention (positive discharges)"""
    status: DispatchStatus
    battery_ids: List[str]
    power_kw: Optional[np.ndarray] = None
    energies_kwh: Optional[np.ndarray] = None
    voltages_sq: Optional[np.ndarray] = None
    capacity_kw: Optional[float] = None
    objective: Optional[float] = None
    solve_time: float = 0.0
    nodes: int = 0

    @property
    def optimal(self) -> bool:
        return self.status == DispatchStatus.OPTIMAL

    def charging_powers(self, t: int = 0) -> np.ndarray:
        """Step t in the battery convention (positive charges)"""
        return -self.power_kw[:, t]

    def injections(self, feeder: Feeder, specs: Sequence[BatterySpec], t: int = 0) -> InjectionSet:
        injections = InjectionSet()
        for i, spec in enumerate(specs):
            injections.add(spec.node, spec.phase, self.power_kw[i, t] / feeder.base_kva)
        return injections

    def to_frame(self, offset: int = 0) -> pd.DataFrame:
        """t, battery, p_kw rows"""
        records = []
        if self.power_kw is not None:
            for t in range(self.power_kw.shape[1]):
                for i, battery in enumerate(self.battery_ids):
                    records.append({"t": offset + t, "battery": battery, "p_kw": float(self.power_kw[i, t])})
        return pd.DataFrame.from_records(records, columns=["t", "battery", "p_kw"])


def solve_dispatch(dp: DispatchProblem, node_limit: int = 5000) -> DispatchSchedule:
    """Build and solve one dispatch problem"""
    battery_ids = [spec.id for spec in dp.specs]
    started = time.perf_counter()

    try:
        problem, pairs, layout = build_problem(dp)
    except PerformanceGateError as e:
        logger.warning(f"Dispatch gated: {e}")
        log_solver_event("dispatch", DispatchStatus.PERFORMANCE_GATED.value)
        return DispatchSchedule(status=DispatchStatus.PERFORMANCE_GATED, battery_ids=battery_ids)

    solution = solve_milp(problem, pairs, node_limit=node_limit)
    elapsed = time.perf_counter() - started
    status = DispatchStatus(solution.status.value)

    log_solver_event(
        "dispatch", status.value, elapsed,
        {"batteries": len(dp.specs), "horizon": dp.horizon, "nodes": solution.nodes},
    )

    if solution.status != LpStatus.OPTIMAL:
        return DispatchSchedule(status=status, battery_ids=battery_ids, solve_time=elapsed, nodes=solution.nodes)

    x = solution.x
    feeder = dp.feeder
    power = x[layout.p_plus] - x[layout.p_minus]
    energies = x[layout.energy]

    voltages = np.full((dp.horizon, feeder.n_nodes, 3), np.nan)
    src = feeder.source_index
    voltages[:, src, feeder.phase_mask[src]] = feeder.source_v_sq
    for (t, k, ph), j in layout.v_sq.items():
        voltages[t, k, ph] = x[j]

    return DispatchSchedule(
        status=status,
        battery_ids=battery_ids,
        power_kw=power,
        energies_kwh=energies,
        voltages_sq=voltages,
        capacity_kw=float(x[layout.capacity]),
        objective=solution.objective,
        solve_time=elapsed,
        nodes=solution.nodes,
    )


@dataclass
class RecedingHorizonResult:
    """Applied powers and bookkeeping of a receding-horizon run"""
    battery_ids: List[str]
    power_kw: np.ndarray
    statuses: List[DispatchStatus]
    objective: float
    solve_times: List[float] = field(default_factory=list)
    violations: int = 0
    revenue: float = 0.0

    @property
    def mean_solve_time(self) -> float:
        return float(np.mean(self.solve_times)) if self.solve_times else 0.0

    def to_frame(self) -> pd.DataFrame:
        records = []
        for t in range(self.power_kw.shape[1]):
            for i, battery in enumerate(self.battery_ids):
                records.append({"t": t, "battery": battery, "p_kw": float(self.power_kw[i, t])})
        return pd.DataFrame.from_records(records, columns=["t", "battery", "p_kw"])


def solve_receding_horizon(feeder: Feeder,
                           specs: Sequence[BatterySpec],
                           scenario: RegulationScenario,
                           account: MarketAccount,
                           horizon: int = 1,
                           size_capacity: bool = False,
                           voltage_margin: float = 1e-6,
                           node_limit: int = 5000) -> RecedingHorizonResult:
    """Solve over a look-ahead window, apply the first step, advance and repeat"""
    fleet = FleetState.initial(specs, scenario.duration_h)
    steps = len(scenario)
    applied = np.zeros((len(specs), steps))
    statuses, solve_times = [], []
    objective = 0.0
    violations = 0
    revenue = 0.0

    for t in range(steps):
        window = min(horizon, steps - t)
        dp = DispatchProblem(
            feeder=feeder,
            specs=tuple(specs),
            energies=fleet.energies.copy(),
            duration_h=scenario.duration_h,
            instructions=scenario.instructions[t:t + window],
            prices=scenario.prices[t:t + window],
            account=account,
            start_step=t,
            size_capacity=size_capacity,
            voltage_margin=voltage_margin,
        )
        schedule = solve_dispatch(dp, node_limit=node_limit)
        statuses.append(schedule.status)
        solve_times.append(schedule.solve_time)

        if schedule.optimal:
            grid_power = schedule.power_kw[:, 0]
            objective += schedule.objective
        else:
            logger.warning(f"Step {t}: dispatch {schedule.status.value}, holding fleet idle")
            grid_power = np.zeros(len(specs))

        # keep applied powers inside the SoC envelope
        ranges = fleet.power_ranges()
        charging = np.clip(-grid_power, ranges[:, 0], ranges[:, 1])
        fleet.advance(charging)
        applied[:, t] = -charging

        injections = InjectionSet()
        for i, spec in enumerate(specs):
            injections.add(spec.node, spec.phase, applied[i, t] / feeder.base_kva)
        violations += count_violations(solve_linear(feeder, injections))

        perf = account.score(float(scenario.instructions[t]), float(np.sum(applied[:, t])))
        revenue += step_revenue(account, perf, float(scenario.prices[t]), scenario.duration_h)
        account.record(perf)

    logger.info(
        f"Receding horizon over {steps} steps: objective {objective:.4f}, "
        f"{violations} violations, mean solve {np.mean(solve_times):.4f}s"
    )

    return RecedingHorizonResult(
        battery_ids=[spec.id for spec in specs],
        power_kw=applied,
        statuses=statuses,
        objective=objective,
        solve_times=solve_times,
        violations=violations,
        revenue=revenue,
    )
