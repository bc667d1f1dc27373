"""Energy-cost-aware scheduling (CSPLib 059 without startup/shutdown costs).

Time-indexed formulation: binary ``x[j, m, t]`` starts task ``j`` on
machine ``m`` at slot ``t``. Each task starts exactly once, and on every
machine and slot the resource use of the running tasks stays within the
machine's capacity. The objective is linear in the slot prices, so only
objective coefficients change between oracle calls.

The predicted price vector has ``price_slots`` entries (48 half hours); a
horizon with finer slots maps slot ``s`` to price ``s * price_slots // horizon``.
"""

from __future__ import annotations

import time
import dataclasses
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import MINIMIZE, OptInstance, Oracle, Solution
from .solver import EQ, LE, LpProblem, MipConfig, SolutionPool, solve_lp, solve_mip


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class Task:
    duration: int
    earliest: int
    latest: int  # exclusive end of the window
    requirement: int
    power: float


@dataclass(frozen=True)
class SchedulingInstance:
    machine_count: int
    capacities: tuple
    horizon: int
    tasks: tuple
    price_slots: int = 48
    meta: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "capacities", tuple(int(c) for c in self.capacities))
        object.__setattr__(self, "tasks", tuple(self.tasks))
        object.__setattr__(self, "meta", tuple((str(k), str(v)) for k, v in self.meta))
        if len(self.capacities) != self.machine_count or self.machine_count <= 0:
            raise ValueError("need one positive capacity per machine")
        for j, t in enumerate(self.tasks):
            if not (0 <= t.earliest and t.latest <= self.horizon and t.duration > 0):
                raise ValueError(f"task {j} window [{t.earliest}, {t.latest}) leaves the horizon")

    @property
    def task_count(self) -> int:
        return len(self.tasks)

    def price_map(self) -> np.ndarray:
        """Expansion matrix (horizon x price_slots) from price entries to slots."""
        E = np.zeros((self.horizon, self.price_slots))
        E[np.arange(self.horizon), np.arange(self.horizon) * self.price_slots // self.horizon] = 1.0
        return E


def scheduling_instance(sched: SchedulingInstance, id=0) -> OptInstance:
    return OptInstance(id=id, sense=MINIMIZE, variable_count=sched.price_slots,
                       constraint_data=sched, family="milp-scheduling")


class SchedulingModel:
    """Constraint structure of one instance, built once and reused for every price vector."""

    def __init__(self, sched: SchedulingInstance):
        self.instance = sched
        variables = []
        for j, task in enumerate(sched.tasks):
            starts = range(task.earliest, task.latest - task.duration + 1)
            machines = [m for m in range(sched.machine_count) if task.requirement <= sched.capacities[m]]
            if len(starts) == 0:
                raise ModelError(f"task {j} has an empty admissible window "
                                 f"[{task.earliest}, {task.latest}) for duration {task.duration}")
            if not machines:
                raise ModelError(f"task {j} requirement {task.requirement} exceeds every machine capacity")
            variables.extend((j, m, t) for m in machines for t in starts)
        self.variables = variables
        n = len(variables)
        H = sched.horizon
        energy = np.zeros((n, H))
        assign = np.zeros((sched.task_count, n))
        usage = np.zeros((sched.machine_count * H, n))
        for v, (j, m, t) in enumerate(variables):
            task = sched.tasks[j]
            energy[v, t:t + task.duration] = task.power
            assign[j, v] = 1.0
            usage[m * H + t: m * H + t + task.duration, v] = task.requirement
        active = np.flatnonzero(usage.any(axis=1))
        self.energy = energy
        self.theta_map = energy @ sched.price_map()  # objective coefficients = theta_map @ prices
        A = np.vstack([assign, usage[active]])
        caps = np.repeat(np.asarray(sched.capacities, dtype=float), H)[active]
        rhs = np.concatenate([np.ones(sched.task_count), caps])
        senses = (EQ,) * sched.task_count + (LE,) * len(active)
        self.problem = LpProblem(np.zeros(n), A, senses, rhs, np.zeros(n), np.ones(n),
                                 names=[f"x_{j}_{m}_{t}" for j, m, t in variables])
        self.integral_mask = np.ones(n, dtype=bool)
        self._task_of = np.array([j for j, _, _ in variables])

    @property
    def n(self) -> int:
        return len(self.variables)

    def objective(self, slot_prices) -> np.ndarray:
        return self.energy @ np.asarray(slot_prices, dtype=float)

    def decode(self, x) -> list:
        """(task, machine, start) triples of the variables set to one."""
        x = np.asarray(x)
        return [self.variables[v] for v in np.flatnonzero(x > 0.5)]

    def heuristic(self, objective: np.ndarray):
        """Repair heuristic: place tasks greedily following the LP point."""
        sched = self.instance
        H = sched.horizon
        caps = np.asarray(sched.capacities, dtype=float)

        def repair(x_lp):
            load = np.zeros((sched.machine_count, H))
            x = np.zeros(self.n)
            strength = np.zeros(sched.task_count)
            np.maximum.at(strength, self._task_of, x_lp)
            for j in np.argsort(-strength, kind="stable"):
                task = sched.tasks[j]
                cand = np.flatnonzero(self._task_of == j)
                order = cand[np.lexsort((cand, objective[cand], -np.round(x_lp[cand], 6)))]
                for v in order:
                    _, m, t = self.variables[v]
                    seg = load[m, t:t + task.duration]
                    if np.all(seg + task.requirement <= caps[m] + 1e-9):
                        seg += task.requirement
                        x[v] = 1.0
                        break
                else:
                    return None
            return x

        return repair


def build_milp(sched: SchedulingInstance, prices):
    """MILP for ``sched`` under horizon-length slot ``prices``; returns ``(LpProblem, mask)``."""
    prices = np.asarray(prices, dtype=float)
    if prices.shape != (sched.horizon,):
        raise ValueError(f"expected {sched.horizon} slot prices, got shape {prices.shape}")
    model = SchedulingModel(sched)
    return model.problem.with_objective(model.objective(prices)), model.integral_mask.copy()


def validate_schedule(sched: SchedulingInstance, schedule, slot_prices=None, tol=1e-6):
    """Check a decoded schedule against the raw instance data.

    ``schedule`` is a list of ``(task, machine, start)``. Returns the energy
    cost under ``slot_prices`` (or None); raises ValueError on any violation.
    """
    placed = {}
    for j, m, t in schedule:
        if j in placed:
            raise ValueError(f"task {j} placed more than once")
        placed[j] = (m, t)
    if len(placed) != sched.task_count:
        missing = sorted(set(range(sched.task_count)) - set(placed))
        raise ValueError(f"tasks {missing} not placed")
    usage = [[0] * sched.horizon for _ in range(sched.machine_count)]
    cost = 0.0
    for j, (m, t) in placed.items():
        task = sched.tasks[j]
        if t < task.earliest or t + task.duration > task.latest:
            raise ValueError(f"task {j} starts at {t} outside its window")
        for s in range(t, t + task.duration):
            usage[m][s] += task.requirement
            if slot_prices is not None:
                cost += task.power * slot_prices[s]
    for m in range(sched.machine_count):
        for s in range(sched.horizon):
            if usage[m][s] > sched.capacities[m] + tol:
                raise ValueError(f"machine {m} over capacity at slot {s}")
    return cost if slot_prices is not None else None


# instance generation --------------------------------------------------------

KINDS = {
    "easy-10": dict(machines=3, tasks=10, horizon=48, capacity=4, duration=(1, 6),
                    requirement=(1, 3), power=(1.0, 10.0), slack=(6, 30)),
    "easy-15": dict(machines=3, tasks=15, horizon=48, capacity=4, duration=(1, 6),
                    requirement=(1, 3), power=(1.0, 10.0), slack=(6, 30)),
    "easy-20": dict(machines=3, tasks=20, horizon=48, capacity=4, duration=(1, 6),
                    requirement=(1, 3), power=(1.0, 10.0), slack=(6, 30)),
    "hard-like": dict(machines=3, tasks=20, horizon=72, capacity=4, duration=(4, 14),
                      requirement=(1, 3), power=(1.0, 10.0), slack=(12, 48)),
}


def generate_instance(kind: str, seed: int, **overrides) -> SchedulingInstance:
    """Seeded random instance; every task can be placed, so the MILP is feasible.

    Tasks are drawn one at a time and redrawn if they cannot be added to a
    first-fit schedule of the tasks accepted so far.
    """
    if kind not in KINDS:
        raise ValueError(f"unknown instance kind {kind!r}; expected one of {sorted(KINDS)}")
    p = dict(KINDS[kind], **overrides)
    rng = np.random.default_rng(seed)
    H = p["horizon"]
    caps = [p["capacity"]] * p["machines"]
    load = np.zeros((p["machines"], H))
    tasks = []
    while len(tasks) < p["tasks"]:
        d = int(rng.integers(p["duration"][0], p["duration"][1] + 1))
        width = min(H, d + int(rng.integers(p["slack"][0], p["slack"][1] + 1)))
        earliest = int(rng.integers(0, H - width + 1))
        req = int(rng.integers(p["requirement"][0], p["requirement"][1] + 1))
        power = round(float(rng.uniform(*p["power"])), 2)
        task = Task(d, earliest, earliest + width, req, power)
        placed = False
        for m in range(p["machines"]):
            for t in range(task.earliest, task.latest - d + 1):
                if np.all(load[m, t:t + d] + req <= caps[m]):
                    load[m, t:t + d] += req
                    placed = True
                    break
            if placed:
                break
        if placed:
            tasks.append(task)
    meta = (("kind", kind), ("seed", seed), ("duration", "%d..%d" % p["duration"]),
            ("requirement", "%d..%d" % p["requirement"]), ("power", "%g..%g" % p["power"]),
            ("slack", "%d..%d" % p["slack"]))
    return SchedulingInstance(p["machines"], tuple(caps), H, tuple(tasks), 48, meta)


# instance files -------------------------------------------------------------

def format_instance(sched: SchedulingInstance) -> str:
    lines = ["# energy-cost-aware scheduling instance"]
    if sched.meta:
        lines.append("meta " + " ".join(f"{k}={v}" for k, v in sched.meta))
    lines.append(f"horizon {sched.horizon}")
    lines.append(f"price_slots {sched.price_slots}")
    lines.append(f"machines {sched.machine_count}")
    lines.append("capacity " + " ".join(str(c) for c in sched.capacities))
    lines.append(f"tasks {sched.task_count}")
    lines.append("# duration earliest latest requirement power")
    for t in sched.tasks:
        lines.append(f"{t.duration} {t.earliest} {t.latest} {t.requirement} {t.power!r}")
    return "\n".join(lines) + "\n"


def parse_instance(text: str) -> SchedulingInstance:
    header = {}
    meta = ()
    tasks = []
    expected = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, _, rest = line.partition(" ")
        if key == "meta":
            meta = tuple(tuple(item.split("=", 1)) for item in rest.split())
        elif key in ("horizon", "price_slots", "machines", "tasks"):
            header[key] = int(rest)
            if key == "tasks":
                expected = int(rest)
        elif key == "capacity":
            header[key] = tuple(int(c) for c in rest.split())
        else:
            parts = line.split()
            if len(parts) != 5:
                raise ValueError(f"line {lineno}: expected 5 task fields, got {len(parts)}")
            d, e, l, r = (int(p) for p in parts[:4])
            tasks.append(Task(d, e, l, r, float(parts[4])))
    if expected is not None and expected != len(tasks):
        raise ValueError(f"declared {expected} tasks, found {len(tasks)}")
    return SchedulingInstance(header["machines"], header["capacity"], header["horizon"], tuple(tasks),
                              header.get("price_slots", 48), meta)


def save_instance(sched: SchedulingInstance, path):
    with open(path, "w") as fh:
        fh.write(format_instance(sched))


def load_instance(path) -> SchedulingInstance:
    with open(path) as fh:
        return parse_instance(fh.read())


# oracles --------------------------------------------------------------------

WARMSTARTS = ("none", "basis", "incumbent", "bound")


BASIS_MEMORY = 2  # bases kept per structure, e.g. one for true and one for SPO-transformed prices


@dataclass
class SchedulingOracle(Oracle):
    """LP-relaxation or branch-and-bound oracle over cached scheduling models.

    ``warmstart`` selects what the oracle does with earlier work:
    ``basis`` resumes the simplex from one of the last few bases on the same
    constraint structure (feasible for any prices), picking the one whose
    objective points closest to the new objective; ``incumbent`` seeds branch and bound with the best pooled
    solution, ``bound`` adds the hint solution's objective as a cut (LP) or
    pruning bound (MIP).
    """

    relax: bool = True
    gap: float = 0.0
    warmstart: str = "none"
    node_limit: Optional[int] = None
    pricing: str = "steepest-edge"
    basis_similarity: float = 0.99  # minimum cosine between objectives for basis reuse
    _models: dict = field(default_factory=dict, repr=False)
    _bases: dict = field(default_factory=dict, repr=False)
    _day_bases: dict = field(default_factory=dict, repr=False)
    _pools: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.warmstart not in WARMSTARTS:
            raise ValueError(f"warmstart must be one of {WARMSTARTS}")

    @property
    def name(self):
        if self.relax:
            return "sched-relax"
        return "sched-exact" if self.gap == 0 else f"sched-gap:{self.gap:g}"

    @property
    def exact(self):
        return not self.relax and self.gap == 0

    def model(self, sched: SchedulingInstance) -> SchedulingModel:
        key = id(sched)
        entry = self._models.get(key)
        if entry is None or entry[0] is not sched:
            entry = (sched, SchedulingModel(sched))
            self._models[key] = entry
        return entry[1]

    def _nearest_basis(self, skey, day, obj):
        """Stored basis whose objective direction is closest to ``obj``.

        Candidates are the last few bases on the structure (with cached
        tableaux) and the bases from earlier solves of the same day (indices
        only, refactorized on reuse).
        """
        candidates = self._bases.get(skey, []) + self._day_bases.get((skey, day), [])
        if not candidates:
            return None, None
        unit = obj / (np.linalg.norm(obj) or 1.0)
        similarity = [direction @ unit for direction, _ in candidates]
        k = int(np.argmax(similarity))
        if similarity[k] < self.basis_similarity:
            return None, None
        recent = len(self._bases.get(skey, []))
        return candidates[k][1], (k if k < recent else None)

    def _remember_basis(self, skey, day, obj, basis, slot):
        unit = obj / (np.linalg.norm(obj) or 1.0)
        entries = self._bases.setdefault(skey, [])
        if slot is not None and len(entries) >= BASIS_MEMORY:
            entries[slot] = (unit, basis)
        else:
            entries.append((unit, basis))
            del entries[:-BASIS_MEMORY]
        light = dataclasses.replace(basis, tableau=None)
        day_entries = self._day_bases.setdefault((skey, day), [])
        for i, (direction, _) in enumerate(day_entries):
            if direction @ unit > 0.99:
                day_entries[i] = (unit, light)
                break
        else:
            day_entries.append((unit, light))
            del day_entries[:-BASIS_MEMORY]

    def solve(self, instance, coeffs, hint=None):
        t0 = time.perf_counter()
        sched = instance.constraint_data
        model = self.model(sched)
        coeffs = np.asarray(coeffs, dtype=float)
        obj = model.theta_map @ coeffs
        problem = model.problem.with_objective(obj)
        skey = id(sched)
        start_basis, slot = (self._nearest_basis(skey, instance.id, obj) if self.warmstart == "basis"
                             else (None, None))
        hint_value = None
        if hint is not None and hint.raw is not None:
            hint_value = float(obj @ hint.raw)
        info = {}
        if self.relax:
            if self.warmstart == "bound" and hint_value is not None:
                problem = problem.with_row(obj, LE, hint_value + 1e-9 * max(1.0, abs(hint_value)))
            lp_sol, basis = solve_lp(problem, start_basis, pricing=self.pricing)
            x = lp_sol.assignment
            info.update(lp_sol.info)
        else:
            config = MipConfig(gap_tolerance=self.gap, node_limit=self.node_limit,
                               heuristic=model.heuristic(obj), root_basis=start_basis,
                               pricing=self.pricing)
            pool = self._pools.setdefault(skey, SolutionPool(max_size=64))
            if self.warmstart == "incumbent":
                best = pool.best(coeffs)
                if hint is not None and hint.raw is not None:
                    if best is None or hint_value < float(obj @ best.raw):
                        best = hint
                config.incumbent = best.raw if best is not None else None
            elif self.warmstart == "bound" and hint_value is not None:
                config.objective_bound = hint_value + 1e-9 * max(1.0, abs(hint_value))
            mip_sol = solve_mip(problem, model.integral_mask, config)
            x = mip_sol.assignment
            basis = mip_sol.info.pop("root_basis")
            info.update(mip_sol.info)
        if self.warmstart == "basis":
            self._remember_basis(skey, instance.id, obj, basis, slot)
        assignment = model.theta_map.T @ x
        sol = Solution(assignment=assignment, objective=float(coeffs @ assignment), solved_with=self.name,
                       seconds=time.perf_counter() - t0, raw=x, info=info)
        if not self.relax:
            self._pools.setdefault(skey, SolutionPool(max_size=64)).add(sol)
        return sol
