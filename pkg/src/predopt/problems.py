"""Problem families, oracle descriptors and per-day instance construction."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .core import Oracle
from .data import SLOTS, Dataset
from .knapsack import (KnapsackData, KnapsackExactOracle, KnapsackGreedyOracle, KnapsackRelaxOracle,
                       knapsack_instance)
from .scheduling import SchedulingInstance, SchedulingOracle, generate_instance, scheduling_instance

PROBLEMS = ("knapsack-unweighted", "knapsack-weighted", "scheduling")


def make_oracle(descriptor: str, warmstart: str = "none", node_limit: Optional[int] = None) -> Oracle:
    """Oracle from a descriptor.

    Knapsack: ``knap-exact``, ``knap-greedy``, ``knap-relax``.
    Scheduling: ``sched-exact``, ``sched-relax``, ``sched-gap:<relative gap>``.
    ``warmstart`` only affects scheduling oracles.
    """
    if descriptor == "knap-exact":
        return KnapsackExactOracle()
    if descriptor == "knap-greedy":
        return KnapsackGreedyOracle()
    if descriptor == "knap-relax":
        return KnapsackRelaxOracle()
    if descriptor == "sched-exact":
        return SchedulingOracle(relax=False, warmstart=warmstart, node_limit=node_limit)
    if descriptor == "sched-relax":
        return SchedulingOracle(relax=True, warmstart=warmstart)
    if descriptor.startswith("sched-gap:"):
        gap = float(descriptor.split(":", 1)[1])
        return SchedulingOracle(relax=False, gap=gap, warmstart=warmstart, node_limit=node_limit)
    raise ValueError(f"unknown oracle descriptor {descriptor!r}")


def oracle_descriptor(problem: str, kind: str) -> str:
    """Map a family-neutral oracle kind (exact, greedy, relax, gap:<g>) to a descriptor."""
    prefix = "sched" if problem == "scheduling" else "knap"
    if kind in ("exact", "greedy", "relax") or kind.startswith("gap:"):
        if prefix == "knap" and kind.startswith("gap:"):
            raise ValueError("gap oracles exist only for scheduling")
        if prefix == "sched" and kind == "greedy":
            raise ValueError("greedy oracle exists only for knapsack")
        return f"{prefix}-{kind}"
    return kind  # already a descriptor


@dataclass(frozen=True)
class ProblemSpec:
    problem: str
    capacity: Optional[int] = None
    sched_kind: str = "easy-10"
    sched_seed: int = 0

    def __post_init__(self):
        if self.problem not in PROBLEMS:
            raise ValueError(f"unknown problem {self.problem!r}; expected one of {PROBLEMS}")
        if self.problem.startswith("knapsack") and self.capacity is None:
            raise ValueError("knapsack problems need a capacity")

    @property
    def label(self) -> str:
        if self.problem == "scheduling":
            return f"scheduling-{self.sched_kind}-i{self.sched_seed}"
        return f"{self.problem}-c{self.capacity}"


def constraint_data(spec: ProblemSpec, dataset: Optional[Dataset] = None):
    if spec.problem == "knapsack-unweighted":
        return KnapsackData.unweighted(SLOTS, spec.capacity)
    if spec.problem == "knapsack-weighted":
        if dataset is None or dataset.weights is None:
            raise ValueError("weighted knapsack needs a dataset with per-slot weights")
        return KnapsackData(tuple(int(w) for w in dataset.weights), spec.capacity)
    return generate_instance(spec.sched_kind, spec.sched_seed)


def day_instances(days, data) -> list:
    """One OptInstance per day, all sharing ``data`` (the observed parameters)."""
    if isinstance(data, SchedulingInstance):
        return [scheduling_instance(data, id=int(d)) for d in days]
    return [knapsack_instance(data, id=int(d)) for d in days]


def default_eval_oracle(spec: ProblemSpec) -> str:
    if spec.problem == "scheduling":
        return "sched-relax" if spec.sched_kind == "hard-like" else "sched-exact"
    return "knap-exact"

