"""
Grid Dispatch Package

Battery fleet frequency regulation on radial distribution feeders: linearized
power flow, a MILP expert dispatcher, a constrained environment and a
constrained soft actor-critic learner with demonstration replay.
"""

__version__ = "1.0.0"
__author__ = "Grid Dispatch Team"

from .bess import BatterySpec, FleetState
from .env import DispatchEnv
from .expert import ExpertPolicy, solve_dispatch
from .grid import Feeder, load_feeder, solve_linear, solve_nonlinear_sweep
from .learn import CsacAgent, ReplayBuffer, train_run
from .market import MarketAccount, RegulationScenario

__all__ = [
    "BatterySpec",
    "FleetState",
    "DispatchEnv",
    "ExpertPolicy",
    "solve_dispatch",
    "Feeder",
    "load_feeder",
    "solve_linear",
    "solve_nonlinear_sweep",
    "CsacAgent",
    "ReplayBuffer",
    "train_run",
    "MarketAccount",
    "RegulationScenario",
]
