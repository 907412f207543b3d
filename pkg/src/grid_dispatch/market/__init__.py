"""
Market Module

Regulation scenarios, performance scoring, capacity payments and aging cost.
"""

from .scenario import RegulationScenario, load_scenario, synthesize_scenario, save_scenario
from .settlement import MarketAccount, performance_index, step_revenue, aging_cost

__all__ = [
    "RegulationScenario",
    "load_scenario",
    "synthesize_scenario",
    "save_scenario",
    "MarketAccount",
    "performance_index",
    "step_revenue",
    "aging_cost"
]
