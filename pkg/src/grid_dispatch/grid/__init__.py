"""
Grid Module

Radial three-phase feeder model, linearized power flow and the nonlinear sweep reference.
"""

from .feeder import Feeder, InjectionSet, load_feeder, feeder_from_dict, load_injections, scale_loads
from .power_flow import PowerFlowSolution, solve_linear, solve_nonlinear_sweep, count_violations

__all__ = [
    "Feeder",
    "InjectionSet",
    "load_feeder",
    "feeder_from_dict",
    "load_injections",
    "scale_loads",
    "PowerFlowSolution",
    "solve_linear",
    "solve_nonlinear_sweep",
    "count_violations"
]
