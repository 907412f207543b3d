"""
Battery model for grid-dispatch

Battery ratings, availability schedule and state-of-charge evolution. Power p is
positive when charging (withdrawal from the grid).
"""

from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..exceptions import SocInfeasibleError, UnplacedBatteryError
from ..grid.feeder import Feeder
from ..utils.logger import get_logger
from ..utils.validators import validate_battery_id, validate_phase

logger = get_logger(__name__)

# Absolute slack (kWh) on the SoC envelope before a step is rejected
SOC_TOLERANCE = 1e-9


@dataclass(frozen=True)
class BatterySpec:
    """Ratings and placement of one battery"""
    id: str
    node: str
    phase: str
    power_kw: float = 10.0
    energy_kwh: float = 4.21
    efficiency: float = 0.9
    soc_min: float = 0.1
    soc_max: float = 0.9
    availability: Tuple[int, ...] = ()
    priority: float = 1.0
    energy_budget_kwh: Optional[float] = None
    initial_soc: float = 0.5

    def __post_init__(self):
        if not validate_battery_id(self.id):
            raise ValueError(f"Invalid battery id {self.id!r}")
        if not validate_phase(self.phase):
            raise ValueError(f"Battery {self.id} has invalid phase {self.phase!r}")
        if self.power_kw <= 0:
            raise ValueError(f"Battery {self.id} power rating must be positive")
        if self.energy_kwh <= 0:
            raise ValueError(f"Battery {self.id} energy rating must be positive")
        if not 0 < self.efficiency <= 1:
            raise ValueError(f"Battery {self.id} efficiency must lie in (0, 1]")
        if not 0 <= self.soc_min < self.soc_max <= 1:
            raise ValueError(f"Battery {self.id} SoC bounds must satisfy 0 <= min < max <= 1")
        if not self.soc_min <= self.initial_soc <= self.soc_max:
            raise ValueError(f"Battery {self.id} initial SoC outside its bounds")
        if not 0 <= self.priority <= 1:
            raise ValueError(f"Battery {self.id} priority must lie in [0, 1]")
        if any(flag not in (0, 1) for flag in self.availability):
            raise ValueError(f"Battery {self.id} availability must be a 0/1 schedule")
        if self.energy_budget_kwh is not None and self.energy_budget_kwh < 0:
            raise ValueError(f"Battery {self.id} energy budget must be non-negative")

        object.__setattr__(self, "phase", self.phase.lower())
        object.__setattr__(self, "availability", tuple(int(a) for a in self.availability))

    @property
    def e_min(self) -> float:
        return self.soc_min * self.energy_kwh

    @property
    def e_max(self) -> float:
        return self.soc_max * self.energy_kwh

    @property
    def e_initial(self) -> float:
        return self.initial_soc * self.energy_kwh

    def available(self, step: int) -> int:
        """Availability flag at a step; the schedule repeats"""
        if not self.availability:
            return 1
        return self.availability[step % len(self.availability)]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "id": self.id,
            "node": self.node,
            "phase": self.phase,
            "power_kw": self.power_kw,
            "energy_kwh": self.energy_kwh,
            "efficiency": self.efficiency,
            "soc_min": self.soc_min,
            "soc_max": self.soc_max,
            "availability": list(self.availability),
            "priority": self.priority,
            "energy_budget_kwh": self.energy_budget_kwh,
            "initial_soc": self.initial_soc,
        }


def step_soc(spec: BatterySpec, e_prev: float, p: float, d: float) -> float:
    """Advance stored energy by one step of power p (kW) over d hours"""
    eta = spec.efficiency
    e_next = e_prev + d * eta * max(p, 0.0) - d * max(-p, 0.0) / eta

    if e_next < spec.e_min - SOC_TOLERANCE or e_next > spec.e_max + SOC_TOLERANCE:
        raise SocInfeasibleError(
            f"Battery {spec.id}: energy {e_next:.6f} kWh outside "
            f"[{spec.e_min:.6f}, {spec.e_max:.6f}] after p={p:.4f} kW for {d:.6f} h"
        )

    return min(max(e_next, spec.e_min), spec.e_max)


def feasible_power_range(spec: BatterySpec, e: float, d: float, step: int = 0) -> Tuple[float, float]:
    """Tightest (p_lo, p_hi) in kW keeping the next SoC inside the envelope"""
    limit = spec.available(step) * spec.power_kw
    if limit == 0:
        return 0.0, 0.0

    eta = spec.efficiency
    p_hi = min(limit, (spec.e_max - e) / (eta * d))
    p_lo = max(-limit, -(e - spec.e_min) * eta / d)

    return min(p_lo, 0.0), max(p_hi, 0.0)


@dataclass
class FleetState:
    """Energy levels of a fleet at a step index"""
    specs: Tuple[BatterySpec, ...]
    energies: np.ndarray
    duration_h: float
    step: int = 0

    @classmethod
    def initial(cls, specs: Sequence[BatterySpec], duration_h: float) -> "FleetState":
        return cls(
            specs=tuple(specs),
            energies=np.array([spec.e_initial for spec in specs], dtype=float),
            duration_h=duration_h,
        )

    @property
    def size(self) -> int:
        return len(self.specs)

    def soc_fractions(self) -> np.ndarray:
        capacity = np.array([spec.energy_kwh for spec in self.specs], dtype=float)
        return self.energies / capacity

    def power_ranges(self) -> np.ndarray:
        """(m, 2) array of feasible (p_lo, p_hi) for the current step"""
        return np.array([
            feasible_power_range(spec, e, self.duration_h, self.step)
            for spec, e in zip(self.specs, self.energies)
        ], dtype=float).reshape(self.size, 2)

    def advance(self, powers: Sequence[float]) -> np.ndarray:
        """Apply one step of charging-positive powers (kW) and move the step index"""
        powers = np.asarray(powers, dtype=float)
        if powers.shape != (self.size,):
            raise ValueError(f"Expected {self.size} battery powers, got shape {powers.shape}")

        self.energies = np.array([
            step_soc(spec, e, p, self.duration_h)
            for spec, e, p in zip(self.specs, self.energies, powers)
        ], dtype=float)
        self.step += 1
        return self.energies

    def copy(self) -> "FleetState":
        return FleetState(self.specs, self.energies.copy(), self.duration_h, self.step)


def fleet_from_dicts(entries: List[Dict[str, Any]]) -> List[BatterySpec]:
    """Build battery specs from configuration mappings"""
    specs = []
    for entry in entries:
        entry = dict(entry)
        entry["availability"] = tuple(entry.get("availability") or ())
        specs.append(BatterySpec(**entry))

    ids = [spec.id for spec in specs]
    if len(set(ids)) != len(ids):
        raise ValueError(f"Duplicate battery ids in fleet: {ids}")

    return specs


def check_placement(feeder: Feeder, specs: Sequence[BatterySpec]):
    """Every battery must sit on an existing node phase"""
    for spec in specs:
        if not feeder.has_phase(spec.node, spec.phase):
            raise UnplacedBatteryError(
                f"Battery {spec.id} placed at {spec.node}.{spec.phase}, which feeder {feeder.name} lacks"
            )
