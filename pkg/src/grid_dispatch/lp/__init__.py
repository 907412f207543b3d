"""
LP Module

Dense linear programs, the bounded-variable simplex and complementarity branch-and-bound.
"""

from .problem import (
    ComplementarityPair,
    LpBuilder,
    LpProblem,
    LpSolution,
    LpStatus,
    Relation,
    format_problem,
    verify_solution,
)
from .simplex import solve_lp
from .branch_and_bound import solve_milp

__all__ = [
    "ComplementarityPair",
    "LpBuilder",
    "LpProblem",
    "LpSolution",
    "LpStatus",
    "Relation",
    "format_problem",
    "verify_solution",
    "solve_lp",
    "solve_milp"
]
