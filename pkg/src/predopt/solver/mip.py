"""Best-first branch and bound over the simplex engine, plus a warmstart pool."""

from __future__ import annotations

import heapq
import itertools
import threading
import time
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from ..core import InfeasibleError, NodeLimitError, Solution
from .lp import FEAS_TOL, LpProblem, SimplexBasis, solve_lp

INT_TOL = 1e-6


@dataclass
class MipConfig:
    """Branch-and-bound knobs.

    ``incumbent`` is a feasible point (array or Solution) that seeds the
    upper bound. ``objective_bound`` prunes every node whose relaxation is
    worse than it. ``heuristic`` maps an LP point to a feasible integral
    point or None; it is tried at the root.
    """

    gap_tolerance: float = 0.0
    incumbent: Optional[object] = None
    objective_bound: Optional[float] = None
    node_limit: Optional[int] = None
    heuristic: Optional[Callable] = None
    root_basis: Optional[SimplexBasis] = None
    pricing: str = "dantzig"  # simplex entering rule for node relaxations

    def __post_init__(self):
        if self.gap_tolerance < 0:
            raise ValueError("gap_tolerance must be nonnegative")
        if self.node_limit is not None and self.node_limit <= 0:
            raise ValueError("node_limit must be positive")


def relative_gap(incumbent: float, bound: float) -> float:
    return (incumbent - bound) / max(1e-9, abs(incumbent))


def _most_fractional(x: np.ndarray, mask: np.ndarray) -> int:
    frac = np.abs(x - np.round(x))
    frac[~mask] = 0.0
    j = int(np.argmax(frac))  # first index on ties
    return j if frac[j] > INT_TOL else -1


def solve_mip(problem: LpProblem, integral_mask, config: Optional[MipConfig] = None) -> Solution:
    """Minimize ``problem`` with the masked variables restricted to {0, 1}.

    Nodes are explored best-first on their LP bound; children are solved
    eagerly, down-branch first, and ties in the queue keep creation order.
    Branching picks the most fractional variable (lowest index on ties).
    Stops when the relative gap is within ``gap_tolerance`` or the node
    limit is reached.
    """
    t0 = time.perf_counter()
    config = config or MipConfig()
    mask = np.asarray(integral_mask, dtype=bool)
    if mask.shape != (problem.n,):
        raise ValueError("integral_mask length must equal the variable count")
    if np.any(problem.lower[mask] < 0) or np.any(problem.upper[mask] > 1):
        raise ValueError("integral variables must have bounds within [0, 1]")

    inc_x = None
    inc_val = np.inf
    if config.incumbent is not None:
        x0 = getattr(config.incumbent, "raw", None)
        if x0 is None:
            x0 = getattr(config.incumbent, "assignment", config.incumbent)
        x0 = np.asarray(x0, dtype=float)
        if problem.violation(x0) <= FEAS_TOL and np.all(np.abs(x0[mask] - np.round(x0[mask])) <= INT_TOL):
            inc_x, inc_val = x0.copy(), float(problem.objective @ x0)
    cutoff = np.inf if config.objective_bound is None else float(config.objective_bound)

    counter = itertools.count()
    nodes = 0
    lp_iterations = 0

    def relax(lower, upper, basis=None):
        nonlocal nodes, lp_iterations
        nodes += 1
        try:
            sol, b = solve_lp(problem.with_bounds(lower, upper), basis, pricing=config.pricing)
        except InfeasibleError:
            return None
        lp_iterations += sol.info["iterations"]
        return sol, b

    def prune_value(value):
        if value > cutoff + 1e-9 * max(1.0, abs(cutoff)):
            return True
        return bool(np.isfinite(inc_val) and value >= inc_val - 1e-9 * max(1.0, abs(inc_val)))

    root = relax(problem.lower, problem.upper, config.root_basis)
    if root is None:
        raise InfeasibleError("MIP relaxation is infeasible")
    root_sol, root_basis = root
    if config.heuristic is not None:
        cand = config.heuristic(root_sol.assignment)
        if cand is not None:
            cand = np.asarray(cand, dtype=float)
            val = float(problem.objective @ cand)
            if val < inc_val and problem.violation(cand) <= FEAS_TOL:
                inc_x, inc_val = cand, val

    heap = []
    if not prune_value(root_sol.objective):
        heapq.heappush(heap, (root_sol.objective, next(counter), problem.lower, problem.upper, root_sol.assignment))
    best_bound = root_sol.objective
    status = "optimal"
    branched = 0
    while heap:
        bound, _, lower, upper, x = heap[0]
        best_bound = bound
        if np.isfinite(inc_val) and relative_gap(inc_val, bound) <= config.gap_tolerance:
            status = "gap" if relative_gap(inc_val, bound) > 1e-9 else "optimal"
            break
        if config.node_limit is not None and nodes >= config.node_limit:
            status = "node_limit"
            break
        heapq.heappop(heap)
        if prune_value(bound):
            continue
        j = _most_fractional(x, mask)
        if j < 0:
            if bound < inc_val:
                inc_x, inc_val = np.where(mask, np.round(x), x), bound
            continue
        branched += 1
        for lo_j, up_j in ((0.0, 0.0), (1.0, 1.0)):
            lo, up = lower.copy(), upper.copy()
            lo[j], up[j] = lo_j, up_j
            child = relax(lo, up)
            if child is None:
                continue
            csol, _ = child
            if prune_value(csol.objective):
                continue
            if _most_fractional(csol.assignment, mask) < 0:
                if csol.objective < inc_val:
                    inc_x = np.where(mask, np.round(csol.assignment), csol.assignment)
                    inc_val = float(problem.objective @ inc_x)
                continue
            heapq.heappush(heap, (csol.objective, next(counter), lo, up, csol.assignment))
    else:
        best_bound = inc_val if np.isfinite(inc_val) else best_bound

    if inc_x is None:
        if status == "node_limit":
            raise NodeLimitError(f"node limit {config.node_limit} reached without an incumbent")
        raise InfeasibleError("no integral solution (within the objective bound)")
    return Solution(assignment=inc_x, objective=float(problem.objective @ inc_x), solved_with="bnb",
                    seconds=time.perf_counter() - t0,
                    info={"nodes": nodes, "branched": branched, "status": status,
                          "best_bound": float(min(best_bound, inc_val)),
                          "gap": max(0.0, relative_gap(inc_val, min(best_bound, inc_val))),
                          "lp_iterations": lp_iterations, "root_basis": root_basis})


def warmstart_pool_lookup(pool, coeffs) -> Optional[Solution]:
    """Pooled solution with the lowest objective under ``coeffs`` (None if empty)."""
    best = None
    best_val = np.inf
    c = np.asarray(coeffs, dtype=float)
    for sol in pool:
        val = float(np.dot(sol.assignment, c))
        if val < best_val:
            best, best_val = sol, val
    return best


class SolutionPool:
    """Previously computed solutions sharing one constraint structure.

    Reads are lock free over a snapshot; inserts are serialized.
    """

    def __init__(self, max_size: Optional[int] = None):
        self._items: list = []
        self._lock = threading.Lock()
        self.max_size = max_size

    def add(self, solution: Solution):
        with self._lock:
            for s in self._items:
                if np.array_equal(s.assignment, solution.assignment):
                    return
            items = self._items + [solution]
            if self.max_size is not None and len(items) > self.max_size:
                items = items[-self.max_size:]
            self._items = items

    def best(self, coeffs) -> Optional[Solution]:
        return warmstart_pool_lookup(self._items, coeffs)

    def __len__(self):
        return len(self._items)

    def __iter__(self):
        return iter(self._items)
