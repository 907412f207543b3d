"""
Branch-and-bound over complementarity pairs for grid-dispatch

Best-first search that fixes one side of a split-variable pair to zero per branch,
pruning on the LP relaxation bound.
"""

import heapq
import itertools
from typing import List, Optional, Sequence

import numpy as np

from ..exceptions import LpDimensionError, MilpNodeLimitError
from ..utils.logger import get_logger
from .problem import ComplementarityPair, LpProblem, LpSolution, LpStatus
from .simplex import solve_lp

logger = get_logger(__name__)

# Pairs whose smaller side is at or below this are treated as complementary
COMPLEMENTARITY_TOL = 1e-10
PRUNE_TOL = 1e-9


def _most_violated(x: np.ndarray, pairs: Sequence[ComplementarityPair]) -> Optional[ComplementarityPair]:
    best_pair, best_score = None, COMPLEMENTARITY_TOL
    for pair in pairs:
        score = min(x[pair.plus], x[pair.minus])
        if score > best_score:
            best_pair, best_score = pair, score
    return best_pair


def solve_milp(problem: LpProblem,
               pairs: Sequence[ComplementarityPair] = (),
               node_limit: int = 5000,
               max_iter: Optional[int] = None) -> LpSolution:
    """Maximize subject to x+ * x- = 0 on every pair"""
    for pair in pairs:
        if max(pair.plus, pair.minus) >= problem.n_vars:
            raise LpDimensionError(f"Complementarity pair {pair} outside {problem.n_vars} variables")

    root = solve_lp(problem, max_iter=max_iter)
    if not root.optimal or not pairs:
        root.nodes = 1
        return root

    # ties on the bound pop the newest node, so equal-valued subtrees are dived
    counter = itertools.count(0, -1)
    frontier: List[tuple] = [(-root.objective, next(counter), problem.lower, problem.upper, root)]
    incumbent: Optional[LpSolution] = None
    best = -np.inf
    explored = 0
    iterations = root.iterations

    while frontier:
        neg_bound, _, lower, upper, relaxation = heapq.heappop(frontier)
        if incumbent is not None and -neg_bound <= best + PRUNE_TOL:
            break

        explored += 1
        if explored > node_limit:
            raise MilpNodeLimitError(f"Branch-and-bound exceeded {node_limit} nodes")

        pair = _most_violated(relaxation.x, pairs)
        if pair is None:
            incumbent, best = relaxation, relaxation.objective
            continue

        for side in (pair.plus, pair.minus):
            if lower[side] > 0:
                continue
            child_lower = lower.copy()
            child_upper = upper.copy()
            child_lower[side] = 0.0
            child_upper[side] = 0.0

            child = solve_lp(problem.with_bounds(child_lower, child_upper), max_iter=max_iter)
            iterations += child.iterations
            if child.optimal and (incumbent is None or child.objective > best + PRUNE_TOL):
                heapq.heappush(frontier, (-child.objective, next(counter), child_lower, child_upper, child))

    if incumbent is None:
        logger.debug(f"MILP infeasible after {explored} nodes")
        return LpSolution(status=LpStatus.INFEASIBLE, iterations=iterations, nodes=explored)

    logger.debug(f"MILP optimal after {explored} nodes: objective {best:.8g}")
    return LpSolution(
        status=LpStatus.OPTIMAL,
        x=incumbent.x,
        objective=incumbent.objective,
        iterations=iterations,
        nodes=explored,
    )
