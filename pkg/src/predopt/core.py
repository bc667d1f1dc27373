"""Parameterized linear-objective problems, solutions and regret.

Every oracle in the package works in minimization sense. Maximization
families (knapsack) are negated at the boundary by :func:`canonicalize`, so
regret and the SPO+ subgradient share one sign convention.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Any, Hashable, Optional

import numpy as np

MINIMIZE = "minimize"
MAXIMIZE = "maximize"

FAMILIES = ("knapsack", "lp", "milp-scheduling")

FEAS_TOL = 1e-6


class DimensionError(ValueError):
    """Coefficient vector length does not match the instance."""


class SolverError(RuntimeError):
    """An oracle could not produce a solution."""


class InfeasibleError(SolverError):
    pass


class UnboundedError(SolverError):
    pass


class NumericalError(SolverError):
    """The simplex tableau drifted too far from its basis to be trusted."""


class NodeLimitError(SolverError):
    """Branch-and-bound hit its node limit before finding any incumbent."""


@dataclass(frozen=True)
class OptInstance:
    """One optimization problem whose objective coefficients vary per call.

    ``constraint_data`` is family specific (``KnapsackData`` or
    ``SchedulingInstance``) and is never mutated. ``variable_count`` is the
    length of the coefficient vector, i.e. the number of predicted values.
    """

    id: Hashable
    sense: str
    variable_count: int
    constraint_data: Any
    family: str

    def __post_init__(self):
        if self.sense not in (MINIMIZE, MAXIMIZE):
            raise ValueError(f"unknown sense {self.sense!r}")
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        if self.variable_count <= 0:
            raise ValueError("variable_count must be positive")

    @property
    def sign(self) -> float:
        return -1.0 if self.sense == MAXIMIZE else 1.0

    def as_minimize(self) -> "OptInstance":
        """The same instance re-tagged as minimization (coefficients already negated)."""
        if self.sense == MINIMIZE:
            return self
        return dataclasses.replace(self, sense=MINIMIZE)


@dataclass
class Solution:
    """A feasible point and its objective under the coefficients that produced it.

    ``assignment`` lives in coefficient space (one entry per predicted value),
    which is what regret and the SPO+ subgradient need. When the decision
    variables differ from that space (scheduling start variables), they are
    kept in ``raw``.
    """

    assignment: np.ndarray
    objective: float
    solved_with: str
    seconds: float = 0.0
    raw: Optional[np.ndarray] = None
    info: dict = field(default_factory=dict)


@dataclass(frozen=True)
class RegretValue:
    value: float
    eval_oracle: str
    exact: bool = True

    @property
    def reported(self) -> float:
        # round-off below zero is only possible for exact oracles
        if self.exact and self.value < 0.0:
            return 0.0
        return self.value


class Oracle:
    """Base class for solvers returning v*(c) for minimization-sense ``c``.

    Subclasses set ``name`` and ``exact`` and implement :meth:`solve`. The
    optional ``hint`` is a previously computed solution on the same
    constraint structure (the cached true solution during SPO training); what
    an oracle does with it depends on its warmstart mode.
    """

    name = "oracle"
    exact = True

    def solve(self, instance: OptInstance, coeffs: np.ndarray, hint: Optional[Solution] = None) -> Solution:
        raise NotImplementedError

    def __repr__(self):
        return f"<{type(self).__name__} {self.name}>"


def as_coeffs(instance: OptInstance, coeffs) -> np.ndarray:
    c = np.asarray(coeffs, dtype=float)
    if c.ndim != 1 or c.shape[0] != instance.variable_count:
        raise DimensionError(
            f"instance {instance.id!r} expects {instance.variable_count} coefficients, got shape {c.shape}"
        )
    if not np.all(np.isfinite(c)):
        raise ValueError("coefficients must be finite")
    return c


def canonicalize(instance: OptInstance, coeffs) -> np.ndarray:
    """Return ``coeffs`` in minimization sense for ``instance``."""
    c = as_coeffs(instance, coeffs)
    if instance.sense == MAXIMIZE:
        return -c
    return c.copy()


def objective_under(solution: Solution, coeffs: np.ndarray) -> float:
    return float(np.dot(solution.assignment, coeffs))


def regret(instance: OptInstance, true_coeffs, pred_coeffs, oracle: Oracle,
           true_solution: Optional[Solution] = None) -> RegretValue:
    """f(v*(pred), true) - f(v*(true), true), both solves by ``oracle``.

    Coefficients are given in the instance's natural sense. A cached
    ``true_solution`` (produced by the same oracle) skips the first solve.
    """
    c_true = canonicalize(instance, true_coeffs)
    c_pred = canonicalize(instance, pred_coeffs)
    inst = instance.as_minimize()
    if true_solution is None:
        true_solution = oracle.solve(inst, c_true)
    pred_solution = oracle.solve(inst, c_pred, hint=true_solution)
    value = objective_under(pred_solution, c_true) - objective_under(true_solution, c_true)
    return RegretValue(float(value), oracle.name, oracle.exact)


def spo_subgradient(instance: OptInstance, true_coeffs, pred_coeffs, oracle: Oracle,
                    true_solution: Optional[Solution] = None):
    """SPO+ subgradient v*(c) - v*(2c_hat - c) in minimization sense.

    Returns ``(g, transformed_solution, true_solution)``. Solutions are
    sense independent, so for a maximization instance ``g`` is also the
    difference of the argmax solutions; the gradient with respect to the
    natural-sense predictions is ``instance.sign * g``.
    """
    c_true = canonicalize(instance, true_coeffs)
    c_pred = canonicalize(instance, pred_coeffs)
    inst = instance.as_minimize()
    if true_solution is None:
        true_solution = oracle.solve(inst, c_true)
    transformed = oracle.solve(inst, 2.0 * c_pred - c_true, hint=true_solution)
    g = np.asarray(true_solution.assignment, dtype=float) - np.asarray(transformed.assignment, dtype=float)
    return g, transformed, true_solution
