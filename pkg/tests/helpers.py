"""Independent reference solvers used as test oracles.

None of these share code with the package: knapsack and scheduling are
solved by exhaustive enumeration over the raw instance data, LPs by
enumerating the vertices of the feasible polytope.
"""

import itertools

import numpy as np

from predopt.knapsack import KnapsackData
from predopt.scheduling import SchedulingInstance, Task


def knapsack_brute_force(weights, capacity, values):
    """Best total value over all 2^n subsets (natural, maximization sense)."""
    n = len(weights)
    masks = np.arange(1 << n)
    take = (masks[:, None] >> np.arange(n)) & 1
    fits = take @ np.asarray(weights) <= capacity
    totals = take @ np.asarray(values, dtype=float)
    return max(0.0, float(totals[fits].max()))


def knapsack_lp_bound(weights, capacity, values):
    """Continuous relaxation optimum via vertex enumeration (at most one fractional item)."""
    n = len(weights)
    best = 0.0
    # a vertex of {0<=x<=1, w.x<=cap} has at most one fractional coordinate
    for frac in range(-1, n):
        others = [i for i in range(n) if i != frac]
        for mask in range(1 << len(others)):
            chosen = [others[k] for k in range(len(others)) if mask >> k & 1]
            used = sum(weights[i] for i in chosen)
            if used > capacity:
                continue
            val = sum(values[i] for i in chosen)
            if frac >= 0:
                x = min(1.0, (capacity - used) / weights[frac])
                val += x * values[frac]
            best = max(best, val)
    return best


def random_knapsack(rng, max_items=15, weights=(1, 3, 5, 7)):
    n = int(rng.integers(1, max_items + 1))
    w = [int(x) for x in rng.choice(weights, size=n)]
    cap = int(rng.integers(1, max(2, sum(w)) + 1))
    values = [float(v) for v in np.round(rng.normal(0, 10, size=n), 3)]
    return KnapsackData(tuple(w), cap), values


def lp_vertex_enumeration(c, A_ub, b_ub, bounds):
    """min c.x over {A_ub x <= b_ub, lo <= x <= hi} by checking every basic point.

    Returns (value, x) or (None, None) if infeasible. Assumes a bounded
    feasible region (finite bounds on every variable).
    """
    c = np.asarray(c, dtype=float)
    n = c.shape[0]
    rows, rhs = [list(r) for r in A_ub], list(b_ub)
    for i, (lo, hi) in enumerate(bounds):
        e = [0.0] * n
        e[i] = -1.0
        rows.append(e)
        rhs.append(-lo)
        e = [0.0] * n
        e[i] = 1.0
        rows.append(e)
        rhs.append(hi)
    G, h = np.array(rows, dtype=float), np.array(rhs, dtype=float)
    best, best_x = None, None
    for idx in itertools.combinations(range(len(h)), n):
        sub = G[list(idx)]
        if abs(np.linalg.det(sub)) < 1e-10:
            continue
        x = np.linalg.solve(sub, h[list(idx)])
        if np.all(G @ x <= h + 1e-9):
            val = float(c @ x)
            if best is None or val < best - 1e-12:
                best, best_x = val, x
    return best, best_x


def random_schedule_toy(rng, max_binaries=12):
    """Small scheduling instance whose time-indexed model has at most ``max_binaries`` variables."""
    while True:
        machines = int(rng.integers(1, 3))
        horizon = int(rng.integers(3, 7))
        caps = tuple(int(c) for c in rng.integers(1, 4, size=machines))
        tasks = []
        for _ in range(int(rng.integers(1, 4))):
            d = int(rng.integers(1, 3))
            e = int(rng.integers(0, horizon - d + 1))
            latest = int(rng.integers(e + d, horizon + 1))
            tasks.append(Task(d, e, latest, int(rng.integers(1, 3)), float(rng.integers(1, 6))))
        count = 0
        for t in tasks:
            starts = t.latest - t.duration + 1 - t.earliest
            count += starts * sum(1 for cap in caps if t.requirement <= cap)
        if count == 0 or count > max_binaries or any(
                all(t.requirement > cap for cap in caps) for t in tasks):
            continue
        return SchedulingInstance(machines, caps, horizon, tuple(tasks), price_slots=horizon)


def schedule_brute_force(sched, slot_prices):
    """Cheapest feasible (task, machine, start) assignment, enumerated from the task data.

    Returns (cost, schedule) or (None, None) when no schedule exists.
    """
    options = []
    for j, t in enumerate(sched.tasks):
        opts = [(j, m, s) for m in range(sched.machine_count) if t.requirement <= sched.capacities[m]
                for s in range(t.earliest, t.latest - t.duration + 1)]
        options.append(opts)
    best, best_sched = None, None
    for combo in itertools.product(*options):
        usage = np.zeros((sched.machine_count, sched.horizon))
        cost = 0.0
        for j, m, s in combo:
            t = sched.tasks[j]
            usage[m, s:s + t.duration] += t.requirement
            cost += t.power * sum(slot_prices[s:s + t.duration])
        if np.all(usage <= np.array(sched.capacities)[:, None]):
            if best is None or cost < best - 1e-12:
                best, best_sched = cost, list(combo)
    return best, best_sched


def rank_flip_data(seed=0, n_train=2000, n_val=3000, level_sd=3.0, kappa_max=6.0, scale=0.1):
    """Two-item knapsack days (capacity 1) where fitting the squared error hurts the ranking.

    Each day has a hidden level L shared by both items and a day factor
    kappa. An item's value is x1 + L. Feature one is x1, which alone ranks
    the pair correctly. Feature two is scale * (L - kappa * x1): it carries
    the level that dominates the squared error, but on days with large kappa
    its within-day difference points against x1. Gradient descent learns the
    feature-one weight fast and the small-scale feature-two weight slowly, so
    more days flip to the wrong item every epoch while the error keeps falling.
    """
    from predopt.data import Split
    from predopt.knapsack import knapsack_instance
    from predopt.training import TrainingData

    rng = np.random.default_rng(seed)
    days = n_train + n_val
    x1 = rng.normal(0.0, 1.0, (days, 2))
    level = rng.normal(0.0, level_sd, (days, 1))
    kappa = rng.uniform(-kappa_max, kappa_max, (days, 1))
    X = np.stack([x1, scale * (level - kappa * x1)], axis=-1)
    y = x1 + level
    data = KnapsackData((1, 1), 1)
    train = Split("train", np.arange(n_train), X[:n_train], y[:n_train])
    val = Split("validation", np.arange(n_train, days), X[n_train:], y[n_train:])
    return TrainingData(train, [knapsack_instance(data, id=i) for i in range(n_train)], val,
                        [knapsack_instance(data, id=i) for i in range(n_train, days)])
