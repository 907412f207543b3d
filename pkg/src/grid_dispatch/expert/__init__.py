"""
Expert Module

Centralized MILP dispatch of the battery fleet and the demonstrations it produces.
"""

from .problem import DispatchProblem, DispatchLayout, build_problem
from .dispatcher import (
    DispatchSchedule,
    DispatchStatus,
    RecedingHorizonResult,
    solve_dispatch,
    solve_receding_horizon,
)
from .demonstrations import ExpertDecision, ExpertPolicy, generate_demonstrations

__all__ = [
    "DispatchProblem",
    "DispatchLayout",
    "build_problem",
    "DispatchSchedule",
    "DispatchStatus",
    "RecedingHorizonResult",
    "solve_dispatch",
    "solve_receding_horizon",
    "ExpertDecision",
    "ExpertPolicy",
    "generate_demonstrations"
]
