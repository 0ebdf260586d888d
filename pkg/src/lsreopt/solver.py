"""Exact MILP solving at desk scale: best-bound branch-and-bound over the
bounded-variable simplex, with warm starts and a global iteration budget.

The budget is a deterministic effort metric: the total number of simplex
pivots across every LP solved anywhere in the tree (including incumbent
cleanup re-solves). Identical (model, warm start, budget) inputs reproduce the
identical search, iteration for iteration.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np

from .core import Solution
from .model import (
    MilpModel,
    constraint_violations,
    objective_value,
    solution_from_assignment,
    solution_to_assignment,
)
from .simplex import (
    INFEASIBLE,
    ITERATION_LIMIT,
    NUMERICAL,
    OPTIMAL,
    UNBOUNDED,
    SimplexEngine,
)

STATUS_OPTIMAL = "optimal"
STATUS_BUDGET = "feasible_budget_exhausted"
STATUS_INFEASIBLE = "infeasible"
STATUS_UNBOUNDED = "unbounded"

INTEGRALITY_TOL = 1e-6
_PRUNE_EPS = 1e-9


class InfeasibleWarmStartError(Exception):
    """The supplied warm start violates the model's constraints."""


@dataclass(frozen=True)
class SolveBudget:
    """Effort cap: total simplex iterations across all nodes, and the relative
    optimality gap at which the search declares victory."""

    simplex_iteration_limit: int
    optimality_gap_target: float = 1e-6

    def __post_init__(self):
        if self.simplex_iteration_limit < 1:
            raise ValueError("simplex_iteration_limit must be >= 1")
        if self.optimality_gap_target < 0:
            raise ValueError("optimality_gap_target must be >= 0")


@dataclass
class SolveResult:
    """Outcome of one MILP solve.

    status 'feasible_budget_exhausted' means the budget ran out; the incumbent
    is the best solution found (absent when not even a warm start existed).
    """

    status: str
    incumbent: Solution | None
    incumbent_value: float
    best_bound: float
    iterations_used: int
    nodes_explored: int

    @property
    def gap(self) -> float:
        if self.incumbent is None or not np.isfinite(self.best_bound):
            return np.inf
        return (self.incumbent_value - self.best_bound) / max(1.0, abs(self.incumbent_value))

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "incumbent_value": self.incumbent_value,
            "best_bound": self.best_bound,
            "iterations_used": self.iterations_used,
            "nodes_explored": self.nodes_explored,
        }


def solve_milp(model: MilpModel, warm_start: Solution | None,
               budget: SolveBudget) -> SolveResult:
    """Best-bound branch-and-bound with most-fractional branching.

    Ties on node bounds break by creation order (FIFO); ties on branching
    fractionality break by lowest variable index. A warm start must be
    feasible and becomes the first incumbent, so the returned value never
    exceeds the warm start's.
    """
    arrays = model.arrays()
    engine = SimplexEngine(arrays.A, arrays.senses, arrays.rhs)
    lower0 = arrays.lower.copy()
    upper0 = arrays.upper.copy()
    binary_cols = np.flatnonzero(arrays.binary)

    incumbent_x: np.ndarray | None = None
    incumbent_value = np.inf
    if warm_start is not None:
        assignment = solution_to_assignment(warm_start)
        bad = constraint_violations(model, assignment, tol=1e-6)
        if bad:
            worst = max(bad, key=lambda kv: kv[1])
            raise InfeasibleWarmStartError(
                f"warm start violates {len(bad)} constraints "
                f"(worst {worst[0]} by {worst[1]:.3e})")
        incumbent_x = np.array([assignment[k] for k in arrays.keys])
        incumbent_value = objective_value(model, assignment)

    iterations_used = 0
    nodes_explored = 0
    counter = 0
    # node: (bound, counter, fixings dict col->(lo, up), hint)
    # hint: (basis, at_upper, token); token points into a small LRU of basis
    # inverses so a child popped soon after its parent skips the re-inversion
    heap: list[tuple[float, int, dict, tuple | None]] = []
    heapq.heappush(heap, (-np.inf, counter, {}, None))
    exhausted = False
    global_bound = -np.inf
    binv_cache: dict[int, np.ndarray] = {}
    binv_token = 0

    def remaining() -> int:
        return budget.simplex_iteration_limit - iterations_used

    while heap:
        bound, _, fixings, hint = heapq.heappop(heap)
        global_bound = bound if not heap else min(bound, heap[0][0])
        if bound >= incumbent_value - _PRUNE_EPS:
            # best-bound order: everything left is no better
            global_bound = incumbent_value
            break
        if incumbent_x is not None and _gap_ok(incumbent_value, bound, budget):
            global_bound = bound
            break
        if remaining() <= 0:
            exhausted = True
            global_bound = bound
            break

        lo = lower0.copy()
        up = upper0.copy()
        for col, (flo, fup) in fixings.items():
            lo[col], up[col] = flo, fup
        kwargs = {}
        if hint is not None:
            kwargs = {"basis": hint[0], "at_upper": hint[1],
                      "binv": binv_cache.get(hint[2])}
        out = engine.solve(arrays.c, lo, up, max_iterations=remaining(), **kwargs)
        iterations_used += out.iterations
        nodes_explored += 1

        if out.status == ITERATION_LIMIT:
            exhausted = True
            global_bound = bound
            break
        if out.status == INFEASIBLE:
            continue
        if out.status == UNBOUNDED:
            return SolveResult(STATUS_UNBOUNDED, None, np.inf, -np.inf,
                               iterations_used, nodes_explored)
        if out.status == NUMERICAL:
            # retry cold if the warm path went numerically bad
            out = engine.solve(arrays.c, lo, up, max_iterations=max(remaining(), 1))
            iterations_used += out.iterations
            if out.status != OPTIMAL:
                continue

        if out.objective >= incumbent_value - _PRUNE_EPS:
            continue

        frac = np.abs(out.x[binary_cols] - np.round(out.x[binary_cols]))
        if frac.size == 0 or frac.max() <= INTEGRALITY_TOL:
            value, point, used = _cleanup_incumbent(
                engine, arrays, lo, up, binary_cols, out, remaining())
            iterations_used += used
            if point is not None and value < incumbent_value - _PRUNE_EPS:
                incumbent_value = value
                incumbent_x = point
            continue

        # branch on the most fractional binary, lowest column index on ties
        scores = np.abs(frac - 0.5)
        best = scores.min()
        col = int(binary_cols[np.flatnonzero(scores <= best + 1e-15)[0]])
        binv_token += 1
        if out.binv is not None:
            binv_cache[binv_token] = out.binv
            while len(binv_cache) > 10:
                binv_cache.pop(next(iter(binv_cache)))
        hint_tuple = (out.basis, out.at_upper, binv_token)
        for val in (0.0, 1.0):
            child = dict(fixings)
            child[col] = (val, val)
            counter += 1
            heapq.heappush(heap, (out.objective, counter, child, hint_tuple))

    if exhausted:
        status = STATUS_BUDGET
        best_bound = min(global_bound, incumbent_value)
    elif incumbent_x is None:
        return SolveResult(STATUS_INFEASIBLE, None, np.inf, np.inf,
                           iterations_used, nodes_explored)
    else:
        status = STATUS_OPTIMAL
        best_bound = incumbent_value
    incumbent = None
    if incumbent_x is not None:
        values = {key: float(incumbent_x[k]) for k, key in enumerate(arrays.keys)}
        incumbent = solution_from_assignment(model, values)
    return SolveResult(status, incumbent, float(incumbent_value), float(best_bound),
                       iterations_used, nodes_explored)


def _gap_ok(incumbent_value: float, bound: float, budget: SolveBudget) -> bool:
    if not np.isfinite(incumbent_value) or not np.isfinite(bound):
        return False
    gap = (incumbent_value - bound) / max(1.0, abs(incumbent_value))
    return gap <= budget.optimality_gap_target


def _cleanup_incumbent(engine, arrays, lo, up, binary_cols, out, budget_left):
    """Pin the (near-)integral binaries exactly and re-solve for clean
    continuous values, so incumbents are exactly binary-feasible."""
    snapped = np.round(out.x[binary_cols])
    lo2, up2 = lo.copy(), up.copy()
    lo2[binary_cols] = snapped
    up2[binary_cols] = snapped
    used = 0
    redo = engine.solve(arrays.c, lo2, up2, basis=out.basis, at_upper=out.at_upper,
                        binv=out.binv, max_iterations=max(budget_left, 1))
    used += redo.iterations
    if redo.status != OPTIMAL:
        redo = engine.solve(arrays.c, lo2, up2, max_iterations=max(budget_left, 1))
        used += redo.iterations
        if redo.status != OPTIMAL:
            return np.inf, None, used
    x = redo.x.copy()
    x[binary_cols] = snapped
    return float(redo.objective), x, used


def solve_relaxation(model: MilpModel, basis_hint=None, max_iterations: int = 10**9):
    """LP relaxation of the model; see simplex.solve_lp."""
    from .simplex import solve_lp
    return solve_lp(model, basis_hint=basis_hint, max_iterations=max_iterations)
