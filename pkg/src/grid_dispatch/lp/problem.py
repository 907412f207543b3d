"""
Linear program model for grid-dispatch

Dense LP description (maximization), incremental builder, solution record,
independent feasibility verifier and a text dump for debugging.
"""

from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Optional, Tuple

import numpy as np

from ..exceptions import LpDimensionError

# Row feasibility tolerance
FEASIBILITY_TOL = 1e-7
# Bound tolerance
BOUND_TOL = 1e-9


class Relation(Enum):
    """Constraint row relation"""
    LE = "<="
    EQ = "="
    GE = ">="


class LpStatus(Enum):
    """LP/MILP solve outcome"""
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


@dataclass(frozen=True)
class LpProblem:
    """maximize c.x subject to A x (rel) b, lower <= x <= upper"""
    c: np.ndarray
    A: np.ndarray
    relations: Tuple[Relation, ...]
    b: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    names: Tuple[str, ...] = ()

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float).ravel()
        n = c.size
        A = np.asarray(self.A, dtype=float)
        if A.size == 0:
            A = A.reshape(0, n)
        b = np.asarray(self.b, dtype=float).ravel()
        lower = np.asarray(self.lower, dtype=float).ravel()
        upper = np.asarray(self.upper, dtype=float).ravel()
        relations = tuple(Relation(r) if not isinstance(r, Relation) else r for r in self.relations)

        if A.ndim != 2 or A.shape[1] != n:
            raise LpDimensionError(f"Constraint matrix shape {A.shape} does not match {n} variables")
        if b.size != A.shape[0] or len(relations) != A.shape[0]:
            raise LpDimensionError(
                f"{A.shape[0]} rows but {b.size} right-hand sides and {len(relations)} relations"
            )
        if lower.size != n or upper.size != n:
            raise LpDimensionError(f"Bounds sized {lower.size}/{upper.size} for {n} variables")
        if np.any(lower > upper):
            bad = int(np.argmax(lower > upper))
            raise LpDimensionError(f"Variable {bad} has lower bound above upper bound")
        if np.any(np.isnan(A)) or np.any(np.isnan(b)) or np.any(np.isnan(c)):
            raise LpDimensionError("LP data contains NaN")

        names = tuple(self.names) if self.names else tuple(f"x{j}" for j in range(n))
        if len(names) != n:
            raise LpDimensionError(f"{len(names)} names for {n} variables")

        object.__setattr__(self, "c", c)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "relations", relations)
        object.__setattr__(self, "names", names)

    @property
    def n_vars(self) -> int:
        return self.c.size

    @property
    def n_rows(self) -> int:
        return self.A.shape[0]

    def with_bounds(self, lower: np.ndarray, upper: np.ndarray) -> "LpProblem":
        return LpProblem(self.c, self.A, self.relations, self.b, lower, upper, self.names)

    def index(self, name: str) -> int:
        return self.names.index(name)


@dataclass(frozen=True)
class ComplementarityPair:
    """Split-variable pair that may not be positive at the same time"""
    plus: int
    minus: int

    def __post_init__(self):
        if self.plus == self.minus:
            raise LpDimensionError(f"Complementarity pair uses variable {self.plus} twice")
        if self.plus < 0 or self.minus < 0:
            raise LpDimensionError("Complementarity pair indices must be non-negative")


@dataclass
class LpSolution:
    """Solve outcome; x and objective are meaningful only when optimal"""
    status: LpStatus
    x: Optional[np.ndarray] = None
    objective: Optional[float] = None
    iterations: int = 0
    nodes: int = 0

    @property
    def optimal(self) -> bool:
        return self.status == LpStatus.OPTIMAL


class LpBuilder:
    """Declares named variables and sparse rows, then emits an LpProblem"""

    def __init__(self):
        self._names: List[str] = []
        self._index: Dict[str, int] = {}
        self._lower: List[float] = []
        self._upper: List[float] = []
        self._objective: List[float] = []
        self._rows: List[Dict[int, float]] = []
        self._relations: List[Relation] = []
        self._rhs: List[float] = []

    @property
    def n_vars(self) -> int:
        return len(self._names)

    @property
    def n_rows(self) -> int:
        return len(self._rows)

    def add_variable(self, name: str, lower: float = 0.0, upper: float = np.inf, objective: float = 0.0) -> int:
        if name in self._index:
            raise LpDimensionError(f"Variable {name} declared twice")
        self._index[name] = len(self._names)
        self._names.append(name)
        self._lower.append(float(lower))
        self._upper.append(float(upper))
        self._objective.append(float(objective))
        return self._index[name]

    def var(self, name: str) -> int:
        return self._index[name]

    def set_objective(self, index: int, coefficient: float):
        self._objective[index] = float(coefficient)

    def add_constraint(self, coefficients: Dict[int, float], relation: Relation, rhs: float) -> int:
        row: Dict[int, float] = {}
        for j, value in coefficients.items():
            if not 0 <= j < len(self._names):
                raise LpDimensionError(f"Constraint references unknown variable index {j}")
            row[j] = row.get(j, 0.0) + float(value)
        self._rows.append(row)
        self._relations.append(relation)
        self._rhs.append(float(rhs))
        return len(self._rows) - 1

    def add_range(self, coefficients: Dict[int, float], low: float, high: float):
        """low <= a.x <= high as one or two rows"""
        if low == high:
            self.add_constraint(coefficients, Relation.EQ, low)
            return
        if np.isfinite(low):
            self.add_constraint(coefficients, Relation.GE, low)
        if np.isfinite(high):
            self.add_constraint(coefficients, Relation.LE, high)

    def build(self) -> LpProblem:
        n = len(self._names)
        A = np.zeros((len(self._rows), n))
        for i, row in enumerate(self._rows):
            for j, value in row.items():
                A[i, j] = value
        return LpProblem(
            c=np.array(self._objective),
            A=A,
            relations=tuple(self._relations),
            b=np.array(self._rhs),
            lower=np.array(self._lower),
            upper=np.array(self._upper),
            names=tuple(self._names),
        )


def verify_solution(problem: LpProblem,
                    x: np.ndarray,
                    row_tol: float = FEASIBILITY_TOL,
                    bound_tol: float = BOUND_TOL) -> List[str]:
    """Return human-readable violations of rows and bounds; empty when feasible"""
    x = np.asarray(x, dtype=float)
    problems = []

    if x.shape != (problem.n_vars,):
        return [f"solution has shape {x.shape}, expected ({problem.n_vars},)"]

    below = x < problem.lower - bound_tol
    above = x > problem.upper + bound_tol
    for j in np.flatnonzero(below | above):
        problems.append(
            f"{problem.names[j]} = {x[j]:.10g} outside [{problem.lower[j]:.10g}, {problem.upper[j]:.10g}]"
        )

    activity = problem.A @ x
    for i, relation in enumerate(problem.relations):
        scale = 1.0 + abs(problem.b[i])
        gap = activity[i] - problem.b[i]
        if relation == Relation.LE and gap > row_tol * scale:
            problems.append(f"row {i}: {activity[i]:.10g} > {problem.b[i]:.10g}")
        elif relation == Relation.GE and gap < -row_tol * scale:
            problems.append(f"row {i}: {activity[i]:.10g} < {problem.b[i]:.10g}")
        elif relation == Relation.EQ and abs(gap) > row_tol * scale:
            problems.append(f"row {i}: {activity[i]:.10g} != {problem.b[i]:.10g}")

    return problems


def _format_term(coefficient: float, name: str) -> str:
    sign = "-" if coefficient < 0 else "+"
    magnitude = abs(coefficient)
    if magnitude == 1:
        return f"{sign} {name}"
    return f"{sign} {magnitude:.6g} {name}"


def format_problem(problem: LpProblem) -> str:
    """Render an LP as a readable text block"""
    lines = ["maximize"]
    terms = [_format_term(problem.c[j], problem.names[j]) for j in range(problem.n_vars) if problem.c[j] != 0]
    lines.append("  " + (" ".join(terms) if terms else "0"))

    lines.append("subject to")
    for i in range(problem.n_rows):
        row = problem.A[i]
        terms = [_format_term(row[j], problem.names[j]) for j in np.flatnonzero(row)]
        lhs = " ".join(terms) if terms else "0"
        lines.append(f"  r{i}: {lhs} {problem.relations[i].value} {problem.b[i]:.10g}")

    lines.append("bounds")
    for j in range(problem.n_vars):
        lines.append(f"  {problem.lower[j]:.10g} <= {problem.names[j]} <= {problem.upper[j]:.10g}")

    return "\n".join(lines) + "\n"
