"""
Battery Module

Battery ratings, availability and state-of-charge dynamics for the dispatched fleet.
"""

from .battery import BatterySpec, FleetState, step_soc, feasible_power_range, fleet_from_dicts, check_placement

__all__ = [
    "BatterySpec",
    "FleetState",
    "step_soc",
    "feasible_power_range",
    "fleet_from_dicts",
    "check_placement"
]
