"""
Regulation market settlement for grid-dispatch

Performance index of a tracked instruction, capacity payments and battery aging cost.
"""

from collections import deque
from dataclasses import dataclass, field
from typing import Deque, Optional, Sequence

import numpy as np

from ..utils.logger import get_logger

logger = get_logger(__name__)


def performance_index(capacity: float,
                      instruction: float,
                      response: float,
                      price_weight: float = 1.0,
                      tolerance: float = 0.0) -> float:
    """Tracking quality of a response b (kW) to instruction r at capacity C, in [0, 1]"""
    if capacity <= 0:
        raise ValueError(f"Capacity must be positive, got {capacity}")

    if instruction == 0:
        return 1.0 if abs(response) <= tolerance else 0.0

    target = capacity * instruction
    score = 1.0 - abs(target - response) / (capacity * abs(instruction)) * price_weight
    return float(min(1.0, max(0.0, score)))


def aging_cost(dispatch: Sequence[float], duration_h: float, c_age: float) -> float:
    """Linear throughput aging cost of one step"""
    if c_age < 0:
        raise ValueError(f"Aging cost coefficient must be non-negative, got {c_age}")

    return float(c_age * np.sum(np.abs(np.asarray(dispatch, dtype=float))) * duration_h)


@dataclass
class MarketAccount:
    """Committed regulation capacity and the performance record behind it"""
    capacity_kw: float
    capacity_cap_kw: Optional[float] = None
    rho_min: float = 0.4
    tolerance_kw: Optional[float] = None
    performance_weight: float = 1.0
    aging_coefficient: float = 0.05
    window: int = 75
    history: Deque[float] = field(default_factory=deque, repr=False)

    def __post_init__(self):
        if self.capacity_cap_kw is None:
            self.capacity_cap_kw = self.capacity_kw
        if self.tolerance_kw is None:
            self.tolerance_kw = 0.02 * self.capacity_kw
        if not 0 <= self.capacity_kw <= self.capacity_cap_kw:
            raise ValueError(
                f"Capacity {self.capacity_kw} kW must lie in [0, {self.capacity_cap_kw}]"
            )
        if not 0 <= self.rho_min <= 1:
            raise ValueError(f"Minimum performance must lie in [0, 1], got {self.rho_min}")
        if self.tolerance_kw < 0:
            raise ValueError("Dispatch tolerance must be non-negative")
        if self.window < 1:
            raise ValueError("Performance window must hold at least one step")
        self.history = deque(self.history, maxlen=self.window)

    @property
    def prev_performance(self) -> float:
        """Rolling mean of recorded indices; 1.0 before any step"""
        if not self.history:
            return 1.0
        return float(np.mean(self.history))

    @property
    def gated(self) -> bool:
        return self.prev_performance < self.rho_min

    def score(self, instruction: float, response: float) -> float:
        return performance_index(
            self.capacity_kw, instruction, response,
            price_weight=self.performance_weight, tolerance=self.tolerance_kw,
        )

    def record(self, performance: float):
        self.history.append(float(performance))

    def reset(self):
        self.history.clear()


def step_revenue(account: MarketAccount, perf: float, price: float, duration_h: float = 1.0) -> float:
    """Capacity payment for one step, prorated over the settlement hour"""
    if not 0 <= perf <= 1:
        raise ValueError(f"Performance must lie in [0, 1], got {perf}")

    return float(perf * price * account.capacity_kw * duration_h)
