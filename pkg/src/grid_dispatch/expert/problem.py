"""
Dispatch problem builder for grid-dispatch

Translates a fleet dispatch horizon on a feeder into an LpProblem with one
complementarity pair per battery and step, plus cross pairs that keep the whole
fleet on one side of each step. P+ is discharge (grid injection) and P- is
charge, both in kW; network quantities are per-unit.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Tuple

import numpy as np

from ..bess.battery import BatterySpec, check_placement
from ..exceptions import PerformanceGateError
from ..grid.feeder import PHASE_INDEX, Feeder
from ..lp.problem import ComplementarityPair, LpBuilder, LpProblem, Relation
from ..market.settlement import MarketAccount
from ..utils.logger import get_logger
from ..utils.validators import PHASES

logger = get_logger(__name__)

DEFAULT_VOLTAGE_MARGIN = 1e-6


@dataclass
class DispatchProblem:
    """Inputs of one expert dispatch over a horizon of len(instructions) steps"""
    feeder: Feeder
    specs: Tuple[BatterySpec, ...]
    energies: np.ndarray
    duration_h: float
    instructions: np.ndarray
    prices: np.ndarray
    account: MarketAccount
    start_step: int = 0
    size_capacity: bool = False
    voltage_margin: float = DEFAULT_VOLTAGE_MARGIN

    def __post_init__(self):
        self.specs = tuple(self.specs)
        self.energies = np.asarray(self.energies, dtype=float)
        self.instructions = np.atleast_1d(np.asarray(self.instructions, dtype=float))
        self.prices = np.atleast_1d(np.asarray(self.prices, dtype=float))

        if self.horizon < 1:
            raise ValueError("Dispatch horizon must hold at least one step")
        if self.prices.shape != self.instructions.shape:
            raise ValueError("Instruction and price horizons differ")
        if self.energies.shape != (len(self.specs),):
            raise ValueError(f"Expected {len(self.specs)} energies, got shape {self.energies.shape}")
        if not np.all(np.isfinite(self.instructions)):
            raise ValueError("Dispatch targets must be finite")
        if self.duration_h <= 0:
            raise ValueError("Step duration must be positive")

    @property
    def horizon(self) -> int:
        return int(self.instructions.size)

    @property
    def targets_kw(self) -> np.ndarray:
        return self.account.capacity_kw * self.instructions


@dataclass
class DispatchLayout:
    """Variable indices of a built dispatch problem"""
    p_plus: np.ndarray
    p_minus: np.ndarray
    energy: np.ndarray
    capacity: int
    p_flow: Dict[Tuple[int, int, int], int] = field(default_factory=dict)
    q_flow: Dict[Tuple[int, int, int], int] = field(default_factory=dict)
    v_sq: Dict[Tuple[int, int, int], int] = field(default_factory=dict)


def build_problem(dp: DispatchProblem) -> Tuple[LpProblem, List[ComplementarityPair], DispatchLayout]:
    """Assemble the dispatch MILP; raises PerformanceGateError below the market minimum"""
    feeder = dp.feeder
    check_placement(feeder, dp.specs)

    account = dp.account
    if account.prev_performance < account.rho_min:
        raise PerformanceGateError(
            f"Previous performance {account.prev_performance:.3f} below minimum {account.rho_min:.3f}"
        )

    m, h = len(dp.specs), dp.horizon
    d = dp.duration_h
    eps = account.tolerance_kw
    builder = LpBuilder()

    # battery splits
    p_plus = np.zeros((m, h), dtype=int)
    p_minus = np.zeros((m, h), dtype=int)
    for t in range(h):
        for i, spec in enumerate(dp.specs):
            limit = spec.available(dp.start_step + t) * spec.power_kw
            p_plus[i, t] = builder.add_variable(f"p_plus[{spec.id},{t}]", 0.0, limit, spec.priority)
            p_minus[i, t] = builder.add_variable(f"p_minus[{spec.id},{t}]", 0.0, limit, spec.priority)

    energy = np.zeros((m, h), dtype=int)
    for t in range(h):
        for i, spec in enumerate(dp.specs):
            energy[i, t] = builder.add_variable(f"e[{spec.id},{t}]", spec.e_min, spec.e_max)

    if dp.size_capacity:
        cap_lo, cap_hi = 0.0, account.capacity_cap_kw
    else:
        cap_lo = cap_hi = account.capacity_kw
    capacity = builder.add_variable(
        "capacity", cap_lo, cap_hi, account.prev_performance * float(np.sum(dp.prices))
    )

    layout = DispatchLayout(p_plus=p_plus, p_minus=p_minus, energy=energy, capacity=capacity)

    edge_phases = feeder.edge_phases()
    node_phases = feeder.node_phases()
    v_lo = feeder.v_min ** 2 + dp.voltage_margin
    v_hi = feeder.v_max ** 2 - dp.voltage_margin
    for t in range(h):
        for e, ph in edge_phases:
            edge = feeder.edges[e]
            label = f"{edge.parent}-{edge.child}.{PHASES[ph]},{t}"
            layout.p_flow[(t, e, ph)] = builder.add_variable(f"P[{label}]", -np.inf, np.inf)
        for e, ph in edge_phases:
            edge = feeder.edges[e]
            label = f"{edge.parent}-{edge.child}.{PHASES[ph]},{t}"
            layout.q_flow[(t, e, ph)] = builder.add_variable(f"Q[{label}]", -np.inf, np.inf)
        for k, ph in node_phases:
            label = f"{feeder.nodes[k].id}.{PHASES[ph]},{t}"
            layout.v_sq[(t, k, ph)] = builder.add_variable(f"v[{label}]", v_lo, v_hi)

    # regulation bands on net and absolute response
    for t in range(h):
        r = float(dp.instructions[t])
        net = {int(p_plus[i, t]): 1.0 for i in range(m)}
        net.update({int(p_minus[i, t]): -1.0 for i in range(m)})
        net[capacity] = -r
        builder.add_range(net, -eps, eps)

        magnitude = {int(p_plus[i, t]): 1.0 for i in range(m)}
        magnitude.update({int(p_minus[i, t]): 1.0 for i in range(m)})
        magnitude[capacity] = -abs(r)
        builder.add_range(magnitude, -eps, eps)

    for i, spec in enumerate(dp.specs):
        eta = spec.efficiency

        if spec.energy_budget_kwh is not None:
            budget = {}
            for t in range(h):
                budget[int(p_minus[i, t])] = eta * d
                budget[int(p_plus[i, t])] = d / eta
            builder.add_constraint(budget, Relation.LE, spec.energy_budget_kwh)

        for t in range(h):
            row = {
                int(energy[i, t]): 1.0,
                int(p_minus[i, t]): -d * eta,
                int(p_plus[i, t]): d / eta,
            }
            if t == 0:
                builder.add_constraint(row, Relation.EQ, float(dp.energies[i]))
            else:
                row[int(energy[i, t - 1])] = -1.0
                builder.add_constraint(row, Relation.EQ, 0.0)

    _add_network_rows(builder, dp, layout)

    return builder.build(), complementarity_pairs(layout), layout


def complementarity_pairs(layout: DispatchLayout) -> List[ComplementarityPair]:
    """Own-battery pairs first, then (P+ of i, P- of j) for i != j at the same step"""
    m, h = layout.p_plus.shape
    pairs = [
        ComplementarityPair(int(layout.p_plus[i, t]), int(layout.p_minus[i, t])) for t in range(h) for i in range(m)
    ]
    # no battery charges while another discharges
    pairs += [
        ComplementarityPair(int(layout.p_plus[i, t]), int(layout.p_minus[j, t]))
        for t in range(h) for i in range(m) for j in range(m) if i != j
    ]
    return pairs


def _add_network_rows(builder: LpBuilder, dp: DispatchProblem, layout: DispatchLayout):
    """Nodal balance and linearized voltage drop rows for every step"""
    feeder = dp.feeder
    base = feeder.base_kva
    loads = feeder.loads
    placed: Dict[Tuple[int, int], List[int]] = {}
    for i, spec in enumerate(dp.specs):
        placed.setdefault((feeder.node_index[spec.node], PHASE_INDEX[spec.phase]), []).append(i)

    coeff_p = np.real(feeder.coupling)
    coeff_q = -np.imag(feeder.coupling)
    source = feeder.source_index

    for t in range(dp.horizon):
        for k, ph in feeder.node_phases():
            e = int(feeder.parent_edge[k])
            children = [int(feeder.parent_edge[c]) for c in feeder.children(k)
                        if feeder.edge_mask[feeder.parent_edge[c], ph]]

            p_row = {layout.p_flow[(t, e, ph)]: 1.0}
            q_row = {layout.q_flow[(t, e, ph)]: 1.0}
            for child_edge in children:
                p_row[layout.p_flow[(t, child_edge, ph)]] = -1.0
                q_row[layout.q_flow[(t, child_edge, ph)]] = -1.0
            for i in placed.get((k, ph), []):
                p_row[int(layout.p_plus[i, t])] = 1.0 / base
                p_row[int(layout.p_minus[i, t])] = -1.0 / base

            builder.add_constraint(p_row, Relation.EQ, float(loads[k, ph].real))
            builder.add_constraint(q_row, Relation.EQ, float(loads[k, ph].imag))

        for k, p in feeder.node_phases():
            e = int(feeder.parent_edge[k])
            parent = int(feeder.parent[k])
            row = {layout.v_sq[(t, k, p)]: 1.0}
            rhs = 0.0
            if parent == source:
                rhs = feeder.source_v_sq
            else:
                row[layout.v_sq[(t, parent, p)]] = -1.0
            for q in range(3):
                if not feeder.edge_mask[e, q]:
                    continue
                if coeff_p[e, p, q] != 0:
                    key = layout.p_flow[(t, e, q)]
                    row[key] = row.get(key, 0.0) + 2.0 * coeff_p[e, p, q]
                if coeff_q[e, p, q] != 0:
                    key = layout.q_flow[(t, e, q)]
                    row[key] = row.get(key, 0.0) + 2.0 * coeff_q[e, p, q]
            builder.add_constraint(row, Relation.EQ, rhs)
