"""
Regulation scenarios for grid-dispatch

Time series of normalized regulation instructions and clearing prices, loaded from
CSV or synthesized from a seed.
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np
import pandas as pd

from ..exceptions import ScenarioError
from ..utils.helpers import atomic_write
from ..utils.logger import get_logger
from ..utils.validators import missing_columns

logger = get_logger(__name__)

SCENARIO_COLUMNS = ("t", "r", "price")

DEFAULT_STEP_SECONDS = 4.0
SIGNAL_PERSISTENCE = 0.95
SIGNAL_NOISE = 0.15
PRICE_MEAN = 0.5
PRICE_SPREAD = 0.1
PRICE_REVERSION = 0.9


@dataclass(frozen=True)
class RegulationScenario:
    """Instruction series r in [-1, 1] with clearing prices ($/kW)"""
    id: str
    instructions: np.ndarray
    prices: np.ndarray
    step_seconds: float = DEFAULT_STEP_SECONDS

    def __post_init__(self):
        instructions = np.array(self.instructions, dtype=float)
        prices = np.array(self.prices, dtype=float)

        if instructions.ndim != 1 or instructions.size == 0:
            raise ScenarioError(f"Scenario {self.id} needs a non-empty instruction series")
        if prices.shape != instructions.shape:
            raise ScenarioError(f"Scenario {self.id}: price and instruction lengths differ")
        if not np.all(np.isfinite(instructions)) or not np.all(np.isfinite(prices)):
            raise ScenarioError(f"Scenario {self.id} contains non-finite values")
        if np.any(np.abs(instructions) > 1.0):
            worst = int(np.argmax(np.abs(instructions)))
            raise ScenarioError(
                f"Scenario {self.id}: instruction {instructions[worst]} at step {worst} exceeds 1"
            )
        if np.any(prices < 0):
            raise ScenarioError(f"Scenario {self.id} contains negative prices")
        if self.step_seconds <= 0:
            raise ScenarioError(f"Scenario {self.id}: step duration must be positive")

        instructions.setflags(write=False)
        prices.setflags(write=False)
        object.__setattr__(self, "instructions", instructions)
        object.__setattr__(self, "prices", prices)

    def __len__(self) -> int:
        return int(self.instructions.size)

    @property
    def duration_h(self) -> float:
        return self.step_seconds / 3600.0

    def targets(self, capacity_kw: float) -> np.ndarray:
        """Target powers C*r in kW"""
        return capacity_kw * self.instructions

    def window(self, offset: int, length: int) -> "RegulationScenario":
        """Contiguous slice used as one episode"""
        if offset < 0 or length < 1 or offset + length > len(self):
            raise ScenarioError(
                f"Window [{offset}, {offset + length}) outside scenario of {len(self)} steps"
            )
        return RegulationScenario(
            id=f"{self.id}[{offset}:{offset + length}]",
            instructions=self.instructions[offset:offset + length],
            prices=self.prices[offset:offset + length],
            step_seconds=self.step_seconds,
        )

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "t": np.arange(len(self)),
            "r": self.instructions,
            "price": self.prices,
        })


def load_scenario(path: Union[str, Path], step_seconds: float = DEFAULT_STEP_SECONDS) -> RegulationScenario:
    """Read a t,r,price CSV"""
    path = Path(path)
    try:
        frame = pd.read_csv(path)
    except FileNotFoundError:
        logger.error(f"Scenario file not found: {path}")
        raise
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise ScenarioError(f"Scenario file {path} is not a readable CSV: {e}")

    missing = missing_columns(frame.columns, SCENARIO_COLUMNS)
    if missing:
        raise ScenarioError(f"Scenario file {path} missing columns: {missing}")

    try:
        frame = frame.astype({"t": int, "r": float, "price": float})
    except (TypeError, ValueError) as e:
        raise ScenarioError(f"Scenario file {path} has non-numeric entries: {e}")

    frame = frame.sort_values("t", kind="stable")
    scenario = RegulationScenario(
        id=path.stem,
        instructions=frame["r"].to_numpy(),
        prices=frame["price"].to_numpy(),
        step_seconds=step_seconds,
    )
    logger.info(f"Loaded scenario {scenario.id} with {len(scenario)} steps")
    return scenario


def synthesize_scenario(seed: int,
                        steps: int,
                        step_seconds: float = DEFAULT_STEP_SECONDS) -> RegulationScenario:
    """Mean-reverting instruction series and price path reproducible from seed"""
    if steps <= 0:
        raise ScenarioError(f"Scenario length must be positive, got {steps}")

    rng = np.random.default_rng(seed)
    signal_noise = rng.standard_normal(steps)
    price_noise = rng.standard_normal(steps)

    instructions = np.empty(steps)
    prices = np.empty(steps)
    r = float(np.clip(SIGNAL_NOISE * signal_noise[0], -1.0, 1.0))
    deviation = 0.0
    for t in range(steps):
        if t > 0:
            r = float(np.clip(SIGNAL_PERSISTENCE * r + SIGNAL_NOISE * signal_noise[t], -1.0, 1.0))
        deviation = PRICE_REVERSION * deviation + (1 - PRICE_REVERSION) * price_noise[t]
        instructions[t] = r
        prices[t] = max(0.0, PRICE_MEAN * (1.0 + PRICE_SPREAD * np.clip(deviation * 3.0, -1.0, 1.0)))

    return RegulationScenario(
        id=f"synthetic-{seed}",
        instructions=instructions,
        prices=prices,
        step_seconds=step_seconds,
    )


def save_scenario(scenario: RegulationScenario, path: Union[str, Path]) -> Path:
    """Write a t,r,price CSV"""
    csv_text = scenario.to_frame().to_csv(index=False, float_format="%.10g")
    path = atomic_write(path, csv_text)
    logger.info(f"Wrote scenario {scenario.id} ({len(scenario)} steps) to {path}")
    return path
