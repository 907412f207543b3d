"""
Brute-force reference solvers used by the test suite
"""

import itertools
from typing import Callable, Optional

import numpy as np

from grid_dispatch.expert.problem import build_problem
from grid_dispatch.lp.problem import LpProblem, LpStatus, Relation
from grid_dispatch.lp.simplex import solve_lp


def _inequality_form(problem: LpProblem):
    """All rows and finite bounds as G x <= h"""
    rows, rhs = [], []
    for a, rel, b in zip(problem.A, problem.relations, problem.b):
        if rel in (Relation.LE, Relation.EQ):
            rows.append(a)
            rhs.append(b)
        if rel in (Relation.GE, Relation.EQ):
            rows.append(-a)
            rhs.append(-b)
    n = problem.n_vars
    for j in range(n):
        unit = np.zeros(n)
        unit[j] = 1.0
        if np.isfinite(problem.upper[j]):
            rows.append(unit)
            rhs.append(problem.upper[j])
        if np.isfinite(problem.lower[j]):
            rows.append(-unit)
            rhs.append(-problem.lower[j])
    return np.array(rows), np.array(rhs)


def vertex_enumeration(problem: LpProblem, tol: float = 1e-7) -> Optional[float]:
    """Best objective over all basic feasible solutions; None if there are none"""
    G, h = _inequality_form(problem)
    n = problem.n_vars
    best = None
    for active in itertools.combinations(range(G.shape[0]), n):
        sub = G[list(active)]
        if abs(np.linalg.det(sub)) < 1e-10:
            continue
        x = np.linalg.solve(sub, h[list(active)])
        if np.all(G @ x <= h + tol):
            value = float(problem.c @ x)
            if best is None or value > best:
                best = value
    return best


def sign_enumeration(dp) -> Optional[float]:
    """Best dispatch objective over every charge/discharge sign pattern

    A pattern fixes each battery to discharge-only or charge-only per step. Patterns
    that split a step across both sides are skipped: with the fleet held to one side,
    their feasible points already lie in a single-sided pattern.
    """
    problem, _, layout = build_problem(dp)
    m, h = layout.p_plus.shape
    best = None
    for pattern in itertools.product((0, 1), repeat=m * h):
        sides = np.array(pattern).reshape(h, m)
        if np.any(sides.min(axis=1) != sides.max(axis=1)):
            continue
        upper = problem.upper.copy()
        for t in range(h):
            for i in range(m):
                upper[layout.p_minus[i, t] if sides[t, i] else layout.p_plus[i, t]] = 0.0
        if np.any(problem.lower > upper):
            continue
        solution = solve_lp(problem.with_bounds(problem.lower, upper))
        if solution.status == LpStatus.OPTIMAL:
            if best is None or solution.objective > best:
                best = solution.objective
    return best


def central_difference(f: Callable[[np.ndarray], float], theta: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """Numerical gradient of a scalar function of a flat vector"""
    grad = np.zeros_like(theta)
    for k in range(theta.size):
        bumped = theta.copy()
        bumped[k] += step
        up = f(bumped)
        bumped[k] -= 2 * step
        down = f(bumped)
        grad[k] = (up - down) / (2 * step)
    return grad
