"""
Shared fixtures for grid-dispatch tests
"""

import sys
from pathlib import Path

import numpy as np
import pytest

ROOT = Path(__file__).parent.parent
sys.path.insert(0, str(ROOT / "src"))

from grid_dispatch.bess.battery import BatterySpec  # noqa: E402
from grid_dispatch.grid.feeder import feeder_from_dict, load_feeder  # noqa: E402
from grid_dispatch.market.scenario import RegulationScenario  # noqa: E402
from grid_dispatch.market.settlement import MarketAccount  # noqa: E402

FEEDER_DIR = ROOT / "data" / "feeders"

BENCHMARK_PLACEMENTS = [("634", "a"), ("675", "b"), ("680", "c"), ("652", "a"), ("611", "c")]


def two_node_document(r=0.01, x=0.01, p_load=0.1, q_load=0.05, source_voltage=1.0):
    """Single-phase source plus one loaded node"""
    loads = []
    if p_load or q_load:
        loads.append({"node": "2", "phase": "a", "p_pu": p_load, "q_pu": q_load})
    return {
        "schema": 1,
        "name": "two_node",
        "bases": {"kva": 100.0, "kv": 2.4},
        "source": {"node": "1", "voltage_pu": source_voltage},
        "limits": {"v_min": 0.95, "v_max": 1.05},
        "nodes": [{"id": "1", "phases": ["a"]}, {"id": "2", "phases": ["a"]}],
        "edges": [{"from": "1", "to": "2", "phases": ["a"], "r": r, "x": x}],
        "loads": loads,
    }


@pytest.fixture
def two_node_feeder():
    return feeder_from_dict(two_node_document())


@pytest.fixture
def four_node_feeder():
    return load_feeder(FEEDER_DIR / "four_node.json")


@pytest.fixture
def thirteen_node_feeder():
    return load_feeder(FEEDER_DIR / "thirteen_node.json")


@pytest.fixture
def benchmark_fleet():
    return [BatterySpec(id=f"b{node}", node=node, phase=phase) for node, phase in BENCHMARK_PLACEMENTS]


@pytest.fixture
def constant_scenario():
    def make(instruction=0.5, price=0.5, steps=4, step_seconds=4.0):
        return RegulationScenario(
            id="constant",
            instructions=np.full(steps, instruction),
            prices=np.full(steps, price),
            step_seconds=step_seconds,
        )
    return make


@pytest.fixture
def account():
    def make(capacity_kw=10.0, **kwargs):
        return MarketAccount(capacity_kw=capacity_kw, **kwargs)
    return make


@pytest.fixture
def feeder_document():
    """Factory for two-node feeder documents"""
    return two_node_document
