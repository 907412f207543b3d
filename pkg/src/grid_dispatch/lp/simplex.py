"""
Bounded-variable primal simplex for grid-dispatch

Two-phase dense tableau method with explicit slack and artificial columns, bound
flips and Bland's smallest-index rule on both the entering and the leaving choice.
"""

import time
from typing import Optional

import numpy as np

from ..exceptions import LpIterationLimitError
from ..utils.logger import get_logger
from .problem import LpProblem, LpSolution, LpStatus, Relation

logger = get_logger(__name__)

PIVOT_TOL = 1e-10
REDUCED_COST_TOL = 1e-9
PHASE_ONE_TOL = 1e-7
REFRESH_EVERY = 50


class _Tableau:
    """Working state of one simplex solve over columns [A | I | D]"""

    def __init__(self, problem: LpProblem):
        n, k = problem.n_vars, problem.n_rows
        self.n = n
        self.k = k
        self.b = problem.b.copy()

        slack_lower = np.zeros(k)
        slack_upper = np.zeros(k)
        for i, relation in enumerate(problem.relations):
            if relation == Relation.LE:
                slack_upper[i] = np.inf
            elif relation == Relation.GE:
                slack_lower[i] = -np.inf

        start = np.where(
            np.isfinite(problem.lower), problem.lower,
            np.where(np.isfinite(problem.upper), problem.upper, 0.0),
        )

        residual = self.b - problem.A @ start
        signs = np.where(residual < 0, -1.0, 1.0)

        self.matrix = np.hstack([problem.A, np.eye(k), np.diag(signs)])
        self.lower = np.concatenate([problem.lower, slack_lower, np.zeros(k)])
        self.upper = np.concatenate([problem.upper, slack_upper, np.full(k, np.inf)])
        self.x = np.concatenate([start, np.zeros(k), np.abs(residual)])

        self.basis = np.arange(n + k, n + 2 * k)
        self.is_basic = np.zeros(n + 2 * k, dtype=bool)
        self.is_basic[self.basis] = True
        # artificial basis is diag(signs), its own inverse
        self.T = signs[:, None] * self.matrix

        self.iterations = 0

    @property
    def artificials(self) -> slice:
        return slice(self.n + self.k, self.n + 2 * self.k)

    def refresh(self):
        """Recompute the tableau and basic values from the original columns"""
        if self.k == 0:
            return
        basis_matrix = self.matrix[:, self.basis]
        try:
            self.T = np.linalg.solve(basis_matrix, self.matrix)
            nonbasic = ~self.is_basic
            rhs = self.b - self.matrix[:, nonbasic] @ self.x[nonbasic]
            self.x[self.basis] = np.linalg.solve(basis_matrix, rhs)
        except np.linalg.LinAlgError:
            logger.warning("Basis matrix singular during refresh; keeping updated tableau")

    def entering(self, cost: np.ndarray) -> Optional[tuple]:
        """Smallest-index improving nonbasic column and its direction"""
        reduced = cost - cost[self.basis] @ self.T if self.k else cost.copy()
        can_rise = (reduced > REDUCED_COST_TOL) & (self.x < self.upper)
        can_fall = (reduced < -REDUCED_COST_TOL) & (self.x > self.lower)
        eligible = np.flatnonzero((can_rise | can_fall) & ~self.is_basic)
        if eligible.size == 0:
            return None
        j = int(eligible[0])
        return j, (1.0 if can_rise[j] else -1.0)

    def step(self, j: int, direction: float) -> bool:
        """Move column j; return False when the move is unbounded"""
        column = self.T[:, j] * direction
        x_b = self.x[self.basis]
        lo_b = self.lower[self.basis]
        up_b = self.upper[self.basis]

        ratios = np.full(self.k, np.inf)
        falling = column > PIVOT_TOL
        rising = column < -PIVOT_TOL
        with np.errstate(invalid="ignore"):
            ratios[falling] = (x_b[falling] - lo_b[falling]) / column[falling]
            ratios[rising] = (up_b[rising] - x_b[rising]) / (-column[rising])
        ratios = np.maximum(ratios, 0.0)

        limit = float(np.min(ratios)) if self.k else np.inf
        flip = self.upper[j] - self.lower[j]

        if not np.isfinite(limit) and not np.isfinite(flip):
            return False

        if flip <= limit:
            self.x[j] = self.upper[j] if direction > 0 else self.lower[j]
            self.x[self.basis] = x_b - flip * column
            return True

        ties = np.flatnonzero(ratios <= limit + 1e-12 * (1.0 + limit))
        r = int(ties[np.argmin(self.basis[ties])])

        self.x[j] += direction * limit
        self.x[self.basis] = x_b - limit * column
        leaving = self.basis[r]
        self.x[leaving] = self.lower[leaving] if column[r] > 0 else self.upper[leaving]

        pivot_row = self.T[r] / self.T[r, j]
        self.T -= np.outer(self.T[:, j], pivot_row)
        self.T[r] = pivot_row

        self.is_basic[leaving] = False
        self.is_basic[j] = True
        self.basis[r] = j
        return True

    def optimize(self, cost: np.ndarray, max_iter: int) -> LpStatus:
        while True:
            choice = self.entering(cost)
            if choice is None:
                self.refresh()
                # refresh may expose a fresh improving column
                if self.entering(cost) is None:
                    return LpStatus.OPTIMAL
                continue

            if self.iterations >= max_iter:
                raise LpIterationLimitError(f"Simplex exceeded {max_iter} iterations")
            self.iterations += 1

            if not self.step(*choice):
                return LpStatus.UNBOUNDED

            if self.iterations % REFRESH_EVERY == 0:
                self.refresh()


def solve_lp(problem: LpProblem, max_iter: Optional[int] = None) -> LpSolution:
    """Solve a maximization LP; infeasible and unbounded are statuses"""
    started = time.perf_counter()
    tableau = _Tableau(problem)
    n, k = tableau.n, tableau.k
    if max_iter is None:
        max_iter = 50 * (n + 2 * k) + 1000

    phase_one = np.zeros(n + 2 * k)
    phase_one[tableau.artificials] = -1.0
    tableau.optimize(phase_one, max_iter)

    infeasibility = float(np.sum(tableau.x[tableau.artificials]))
    scale = 1.0 + (float(np.max(np.abs(problem.b))) if k else 0.0)
    if infeasibility > PHASE_ONE_TOL * scale:
        logger.debug(f"LP infeasible: phase one residual {infeasibility:.3e}")
        return LpSolution(status=LpStatus.INFEASIBLE, iterations=tableau.iterations)

    tableau.upper[tableau.artificials] = 0.0
    tableau.x[tableau.artificials] = np.where(
        tableau.is_basic[tableau.artificials], tableau.x[tableau.artificials], 0.0
    )

    phase_two = np.concatenate([problem.c, np.zeros(2 * k)])
    status = tableau.optimize(phase_two, max_iter)
    if status == LpStatus.UNBOUNDED:
        logger.debug("LP unbounded")
        return LpSolution(status=LpStatus.UNBOUNDED, iterations=tableau.iterations)

    x = np.clip(tableau.x[:n], problem.lower, problem.upper)
    objective = float(problem.c @ x)

    logger.debug(
        f"LP optimal after {tableau.iterations} iterations "
        f"({time.perf_counter() - started:.4f}s): objective {objective:.8g}"
    )
    return LpSolution(status=LpStatus.OPTIMAL, x=x, objective=objective, iterations=tableau.iterations)
