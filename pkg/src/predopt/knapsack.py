"""0-1 knapsack oracles: exact dynamic program, Dantzig greedy, LP relaxation.

The three ``solve_*`` functions take item values in their natural
(maximization) sense. The ``Knapsack*Oracle`` wrappers adapt them to the
minimization-sense oracle protocol of :mod:`predopt.core`.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .core import MAXIMIZE, OptInstance, Oracle, Solution


@dataclass(frozen=True)
class KnapsackData:
    weights: tuple
    capacity: int

    def __post_init__(self):
        w = tuple(int(x) for x in self.weights)
        if not w or min(w) <= 0:
            raise ValueError("weights must be positive integers")
        if int(self.capacity) <= 0:
            raise ValueError("capacity must be a positive integer")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "capacity", int(self.capacity))

    @property
    def item_count(self) -> int:
        return len(self.weights)

    @property
    def w(self) -> np.ndarray:
        return np.asarray(self.weights, dtype=np.int64)

    @classmethod
    def unweighted(cls, item_count: int, capacity: int) -> "KnapsackData":
        return cls((1,) * item_count, capacity)


def knapsack_instance(data: KnapsackData, id=0) -> OptInstance:
    return OptInstance(id=id, sense=MAXIMIZE, variable_count=data.item_count,
                       constraint_data=data, family="knapsack")


def _check(data: KnapsackData, values) -> np.ndarray:
    v = np.asarray(values, dtype=float)
    if v.shape != (data.item_count,):
        raise ValueError(f"expected {data.item_count} values, got shape {v.shape}")
    return v


def _ratio_order(values: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Positive-value items by value/weight descending, ties to lower index."""
    idx = np.flatnonzero(values > 0)
    ratios = values[idx] / weights[idx]
    # lexsort is stable and sorts by the last key first
    return idx[np.lexsort((idx, -ratios))]


def _solution(x: np.ndarray, values: np.ndarray, name: str, start: float) -> Solution:
    return Solution(assignment=x, objective=float(np.dot(x, values)), solved_with=name,
                    seconds=time.perf_counter() - start)


def solve_exact(data: KnapsackData, values) -> Solution:
    """Optimal 0/1 selection by dynamic programming over integer capacity.

    Nonpositive-value items are fixed to 0 up front. Among optimal
    selections the lexicographically smallest assignment is returned: the
    table is filled from the last item backwards and the reconstruction
    from the first item only takes an item when that is strictly better.
    """
    start = time.perf_counter()
    v = _check(data, values)
    w = data.w
    cap = data.capacity
    n = data.item_count
    x = np.zeros(n)
    candidates = np.flatnonzero((v > 0) & (w <= cap))
    if candidates.size:
        k = candidates.size
        # best[i, c]: best value from candidates[i:] within capacity c
        best = np.zeros((k + 1, cap + 1))
        for i in range(k - 1, -1, -1):
            j = candidates[i]
            wj = w[j]
            row = best[i + 1].copy()
            take = best[i + 1, : cap + 1 - wj] + v[j]
            np.maximum(row[wj:], take, out=row[wj:])
            best[i] = row
        c = cap
        for i in range(k):
            j = candidates[i]
            wj = w[j]
            if wj <= c and best[i + 1, c - wj] + v[j] > best[i + 1, c]:
                x[j] = 1.0
                c -= wj
    return _solution(x, v, "knap-exact", start)


def solve_greedy(data: KnapsackData, values) -> Solution:
    """Dantzig's greedy: add items by ratio while they still fit."""
    start = time.perf_counter()
    v = _check(data, values)
    w = data.w
    x = np.zeros(data.item_count)
    remaining = data.capacity
    for j in _ratio_order(v, w):
        if w[j] <= remaining:
            x[j] = 1.0
            remaining -= w[j]
    return _solution(x, v, "knap-greedy", start)


def solve_relaxation(data: KnapsackData, values) -> Solution:
    """LP optimum of the continuous relaxation (fractional greedy).

    At most one entry of the returned assignment is fractional.
    """
    start = time.perf_counter()
    v = _check(data, values)
    w = data.w
    x = np.zeros(data.item_count)
    remaining = float(data.capacity)
    for j in _ratio_order(v, w):
        if remaining <= 0:
            break
        if w[j] <= remaining:
            x[j] = 1.0
            remaining -= w[j]
        else:
            x[j] = remaining / w[j]
            remaining = 0.0
    return _solution(x, v, "knap-relax", start)


class _KnapsackOracle(Oracle):
    _solver = None

    def solve(self, instance, coeffs, hint=None):
        data = instance.constraint_data
        sol = type(self)._solver(data, -np.asarray(coeffs, dtype=float))
        sol.objective = float(np.dot(sol.assignment, coeffs))
        return sol


class KnapsackExactOracle(_KnapsackOracle):
    name = "knap-exact"
    exact = True
    _solver = staticmethod(solve_exact)


class KnapsackGreedyOracle(_KnapsackOracle):
    name = "knap-greedy"
    exact = False
    _solver = staticmethod(solve_greedy)


class KnapsackRelaxOracle(_KnapsackOracle):
    name = "knap-relax"
    exact = False
    _solver = staticmethod(solve_relaxation)
