"""Acceptance suite: one test per criterion, each reported as a PASS/FAIL line in the summary."""

import time

import numpy as np
import pytest

from helpers import (knapsack_brute_force, lp_vertex_enumeration, random_schedule_toy, rank_flip_data,
                     schedule_brute_force)
from predopt.core import spo_subgradient
from predopt.data import emit_csv, ingest_csv, synthesize, to_weighted_knapsack
from predopt.evaluation import format_curve, load_curve
from predopt.experiment import ExperimentConfig, build_training_data, run_experiment
from predopt.knapsack import (KnapsackData, KnapsackExactOracle, KnapsackRelaxOracle, knapsack_instance,
                              solve_exact, solve_greedy, solve_relaxation)
from predopt.model import (LinearModel, Standardizer, load_model, mse_gradient, mse_loss, parameter_gradient,
                           save_model)
from predopt.problems import ProblemSpec
from predopt.scheduling import build_milp, generate_instance, load_instance, save_instance
from predopt.solver import LE, LpProblem, MipConfig, solve_lp, solve_mip
from predopt.training import TrainConfig, train


def knapsack_corpus(count=500, seed=2024):
    """Seeded instances: up to 15 items, weights from {1,3,5,7}, integer values of both signs."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        n = int(rng.integers(1, 16))
        w = tuple(int(x) for x in rng.choice((1, 3, 5, 7), size=n))
        cap = int(rng.integers(1, sum(w) + 1))
        values = [float(v) for v in rng.integers(-20, 31, size=n)]
        out.append((KnapsackData(w, cap), values))
    return out


@pytest.mark.criterion(1, "exact knapsack equals enumeration on 500 instances in under 10 s")
def test_criterion_1_oracle_exactness(detail):
    corpus = knapsack_corpus()
    seconds = 0.0
    mismatches = 0
    for data, values in corpus:
        t = time.perf_counter()
        sol = solve_exact(data, values)
        seconds += time.perf_counter() - t
        if sol.objective != knapsack_brute_force(data.weights, data.capacity, values):
            mismatches += 1
    detail(f"mismatches {mismatches}/500, solve time {seconds:.2f} s")
    assert mismatches == 0
    assert seconds < 10.0


@pytest.mark.criterion(2, "greedy <= exact <= relaxation; relaxation = simplex; simplex = vertex enumeration")
def test_criterion_2_relaxation_dominance(detail):
    chain_bad = simplex_gap = 0.0
    for data, values in knapsack_corpus():
        g = solve_greedy(data, values).objective
        e = solve_exact(data, values).objective
        r = solve_relaxation(data, values).objective
        if not (g <= e <= r + 1e-9):
            chain_bad += 1
        lp = LpProblem(-np.asarray(values), [list(data.weights)], (LE,), [data.capacity])
        simplex_gap = max(simplex_gap, abs(-solve_lp(lp)[0].objective - r))
    rng = np.random.default_rng(7)
    vertex_gap = 0.0
    checked = 0
    while checked < 100:
        n, m = int(rng.integers(1, 4)), int(rng.integers(1, 4))
        c = rng.normal(size=n)
        A = rng.normal(size=(m, n))
        b = rng.uniform(0.5, 4.0, size=m)
        bounds = [(0.0, float(h)) for h in rng.uniform(0.5, 3.0, size=n)]
        expected, _ = lp_vertex_enumeration(c, A, b, bounds)
        if expected is None:
            continue
        p = LpProblem(c, A, (LE,) * m, b, [lo for lo, _ in bounds], [hi for _, hi in bounds])
        vertex_gap = max(vertex_gap, abs(solve_lp(p)[0].objective - expected))
        checked += 1
    detail(f"chain violations {int(chain_bad)}, max |relax - simplex| {simplex_gap:.1e}, "
           f"max |simplex - vertices| {vertex_gap:.1e}")
    assert chain_bad == 0
    assert simplex_gap <= 1e-6
    assert vertex_gap <= 1e-6


@pytest.mark.criterion(3, "branch and bound: gap 0 exact, gap 0.1 within 10%, bound pruning keeps the objective")
def test_criterion_3_mip_correctness(detail):
    rng = np.random.default_rng(3)
    exact_bad = gap_bad = bound_bad = 0
    worst_gap = 0.0
    solved = 0
    while solved < 100:
        sched = random_schedule_toy(rng, max_binaries=12)
        prices = np.round(rng.uniform(0.0, 10.0, size=sched.horizon), 2)
        opt, _ = schedule_brute_force(sched, prices)
        if opt is None:
            continue
        p, mask = build_milp(sched, prices)
        assert mask.sum() <= 12
        exact = solve_mip(p, mask).objective
        exact_bad += abs(exact - opt) > 1e-9 * max(1.0, abs(opt))
        loose = solve_mip(p, mask, MipConfig(gap_tolerance=0.1)).objective
        excess = (loose - opt) / max(1e-9, abs(opt))
        worst_gap = max(worst_gap, excess)
        gap_bad += excess > 0.1 + 1e-12
        for bound in (opt, opt + 0.5 * abs(opt) + 1.0):
            pruned = solve_mip(p, mask, MipConfig(objective_bound=bound)).objective
            bound_bad += abs(pruned - exact) > 1e-9 * max(1.0, abs(exact))
        solved += 1
    detail(f"exact mismatches {exact_bad}, gap-0.1 worst excess {worst_gap:.3f}, bound changes {bound_bad}")
    assert exact_bad == 0 and gap_bad == 0 and bound_bad == 0


@pytest.mark.criterion(4, "MSE gradient = finite differences; SPO subgradient zero at the truth; worked example")
def test_criterion_4_gradients(detail):
    rng = np.random.default_rng(4)
    worst = 0.0
    for _ in range(50):
        n, f = int(rng.integers(2, 97)), int(rng.integers(1, 10))
        X, y = rng.normal(size=(n, f)), rng.normal(0, 20, size=n)
        params = rng.normal(size=f + 1)
        analytic = parameter_gradient(X, mse_gradient(X @ params[:-1] + params[-1], y))
        numeric = np.empty(f + 1)
        for k in range(f + 1):
            e = np.zeros(f + 1)
            e[k] = 1e-5
            up, down = params + e, params - e
            numeric[k] = (mse_loss(X @ up[:-1] + up[-1], y) - mse_loss(X @ down[:-1] + down[-1], y)) / 2e-5
        worst = max(worst, float(np.max(np.abs(analytic - numeric) / np.maximum(np.abs(analytic), 1.0))))
    nonzero = 0
    for _ in range(100):
        n = int(rng.integers(1, 49))
        data = KnapsackData(tuple(int(w) for w in rng.choice((3, 5, 7), size=n)), int(rng.integers(1, 60)))
        theta = rng.normal(0, 30, size=n)
        for oracle in (KnapsackExactOracle(), KnapsackRelaxOracle()):
            g, _, _ = spo_subgradient(knapsack_instance(data), theta, theta, oracle)
            nonzero += bool(np.any(g != 0.0))
    g, _, _ = spo_subgradient(knapsack_instance(KnapsackData((5, 4, 3), 7)), [10.0, 7.0, 4.0],
                              [10.0, 2.0, 4.0], KnapsackExactOracle())
    detail(f"worst relative FD error {worst:.1e}, nonzero subgradients {nonzero}/200, example g = {g.tolist()}")
    assert worst <= 1e-6
    assert nonzero == 0
    assert g.tolist() == [-1.0, 1.0, 1.0]


def longest_joint_run(mse, regret):
    """Longest run of consecutive epochs with MSE strictly falling and regret strictly rising."""
    best = run = 0
    best_end = None
    for k in range(1, len(mse)):
        if mse[k] < mse[k - 1] and regret[k] > regret[k - 1]:
            run += 1
            if run > best:
                best, best_end = run, k
        else:
            run = 0
    return best, best_end


@pytest.mark.criterion(5, "train MSE falls while validation regret rises for at least 10 epochs")
def test_criterion_5_mse_regret_divergence(detail):
    data = rank_flip_data()
    cfg = TrainConfig(regime="mse-r", oracle="knap-exact", learning_rate=3e-4, max_epochs=30)
    _, curve = train(data, LinearModel([0.0, 0.0]), cfg)
    run, end = longest_joint_run(curve.column("train_loss"), curve.column("val_regret"))
    detail(f"window of {run} epochs ending at epoch {end}; mse-r selected epoch {curve.metadata['selected_epoch']}")
    assert run >= 10
    assert curve.metadata["selected_epoch"] <= end - run


def knapsack_training_data(seed, problem="knapsack-unweighted", capacity=10):
    ds = synthesize(seed, 200)
    if problem == "knapsack-weighted":
        ds = to_weighted_knapsack(ds, seed)
    td, std, _ = build_training_data(ProblemSpec(problem, capacity=capacity), ds)
    return td, LinearModel.zeros(ds.feature_count, std)


@pytest.mark.criterion(6, "SPO-relax median regret <= MSE-r, close to SPO-full, and cheaper on weighted knapsack")
def test_criterion_6_relaxation_ordering(detail):
    grid = {"learning_rate": (1e-3, 1e-2, 1e-1), "momentum": (0.0, 0.5, 0.9)}
    spo = dict(regime="spo", learning_rate=0.1, momentum=0.9, max_epochs=20, eval_oracle="knap-exact")
    mse_r, relax, full, per_seed = [], [], [], []
    for seed in range(10):
        t = time.perf_counter()
        td, m0 = knapsack_training_data(seed)
        _, c = train(td, m0, TrainConfig(regime="mse-r", oracle="knap-exact", max_epochs=20, seed=seed,
                                         eval_oracle="knap-exact"), grid)
        mse_r.append(c.reported_test_regret)
        relax.append(train(td, m0, TrainConfig(oracle="knap-relax", seed=seed, **spo))[1].final_test_regret)
        full.append(train(td, m0, TrainConfig(oracle="knap-exact", seed=seed, **spo))[1].final_test_regret)
        per_seed.append(time.perf_counter() - t)
    solver = {"knap-relax": 0.0, "knap-exact": 0.0}
    for seed in range(3):
        td, m0 = knapsack_training_data(seed, "knapsack-weighted", 60)
        for oracle in solver:
            cfg = TrainConfig(regime="spo", oracle=oracle, learning_rate=0.01, momentum=0.5, max_epochs=5, seed=seed)
            solver[oracle] += train(td, m0, cfg)[1].points[-1].solver_s
    med_mse, med_relax = float(np.median(mse_r)), float(np.median(relax))
    diff, sd_full = abs(np.mean(relax) - np.mean(full)), float(np.std(full, ddof=1))
    detail(f"median test regret mse-r {med_mse:.1f} vs spo-relax {med_relax:.1f}; "
           f"|relax - full| {diff:.1f} vs 2 sd {2 * sd_full:.1f}; weighted solver s relax "
           f"{solver['knap-relax']:.2f} vs full {solver['knap-exact']:.2f}; slowest seed {max(per_seed):.0f} s")
    assert med_relax <= med_mse
    assert diff <= 2 * sd_full
    assert solver["knap-relax"] < solver["knap-exact"]
    assert max(per_seed) < 300


def scheduling_training_data(kind, seed, days):
    ds = synthesize(seed, days)
    td, std, _ = build_training_data(ProblemSpec("scheduling", sched_kind=kind, sched_seed=0), ds)
    return td, LinearModel.zeros(ds.feature_count, std)


@pytest.mark.criterion(7, "basis reuse >= 1.5x faster; MSE warmstart within 2 sd; bound cuts do not speed up")
def test_criterion_7_solve_warmstarts(detail):
    td, m0 = scheduling_training_data("easy-20", 0, 60)
    per_epoch = {}
    for ws in ("none", "basis", "bound"):
        cfg = TrainConfig(regime="spo", oracle="sched-relax", learning_rate=0.01, momentum=0.5, max_epochs=6,
                          solve_warmstart=ws)
        per_epoch[ws] = float(np.mean(train(td, m0, cfg)[1].per_epoch_solver_seconds()))
    speedup = per_epoch["none"] / per_epoch["basis"]
    cut_ratio = per_epoch["bound"] / per_epoch["none"]
    base, warm = [], []
    for seed in range(3):
        td, m0 = scheduling_training_data("easy-20", seed, 60)
        common = dict(regime="spo", oracle="sched-relax", learning_rate=0.01, momentum=0.5, max_epochs=6,
                      solve_warmstart="basis", eval_oracle="sched-relax", test_stride=100, seed=seed)
        base.append(train(td, m0, TrainConfig(**common))[1].final_test_regret)
        warm.append(train(td, m0, TrainConfig(warmstart_learning_epochs=6, **common))[1].final_test_regret)
    shift, sd = abs(np.mean(warm) - np.mean(base)), float(np.std(base, ddof=1))
    detail(f"epoch solver s none {per_epoch['none']:.2f}, basis {per_epoch['basis']:.2f} "
           f"(x{speedup:.2f}), bound {per_epoch['bound']:.2f} (ratio {cut_ratio:.2f}); "
           f"warmstart shift {shift:.0f} vs 2 sd {2 * sd:.0f}")
    assert speedup >= 1.5
    assert shift <= 2 * sd
    assert cut_ratio >= 1.0


@pytest.mark.criterion(9, "fixed seeds give identical curves; checkpoints, instances and datasets round-trip")
def test_criterion_9_determinism_and_round_trips(tmp_path, detail):
    config = {"problem": "knapsack-weighted", "capacities": [60],
              "regimes": [{"name": "mse-r", "regime": "mse-r", "oracle": "exact"},
                          {"name": "spo-relax", "regime": "spo", "oracle": "relax"}],
              "seeds": [0, 1], "train": {"max_epochs": 3}, "data": {"source": "synthetic", "day_count": 40}}
    for run in ("a", "b"):
        run_experiment(ExperimentConfig.from_dict(dict(config, output_dir=str(tmp_path / run))), jobs=1)
    curves = sorted((tmp_path / "a" / "curves").glob("*.csv"))
    same_curves = all(format_curve(load_curve(p), False) == format_curve(load_curve(tmp_path / "b" / "curves" / p.name),
                                                                          False) for p in curves)
    ckpts = sorted((tmp_path / "a" / "checkpoints").glob("*.json"))
    same_ckpts = all(p.read_bytes() == (tmp_path / "b" / "checkpoints" / p.name).read_bytes() for p in ckpts)

    rng = np.random.default_rng(9)
    model = LinearModel(rng.normal(size=8) / 3, 1 / 7, Standardizer(rng.normal(size=8), rng.uniform(0.1, 2, 8)))
    save_model(model, tmp_path / "m.json")
    back = load_model(tmp_path / "m.json")
    model_ok = (back.weights.tolist() == model.weights.tolist() and back.bias == model.bias
                and back.standardizer.scale.tolist() == model.standardizer.scale.tolist())
    sched = generate_instance("hard-like", 5)
    save_instance(sched, tmp_path / "i.txt")
    instance_ok = load_instance(tmp_path / "i.txt") == sched
    ds = to_weighted_knapsack(synthesize(9, 15, feature_count=11), 9)
    emit_csv(ds, tmp_path / "d.csv")
    loaded = ingest_csv(tmp_path / "d.csv")
    data_ok = np.array_equal(loaded.features, ds.features) and np.array_equal(loaded.targets, ds.targets)
    detail(f"{len(curves)} curves identical {same_curves}, {len(ckpts)} checkpoints identical {same_ckpts}, "
           f"model {model_ok}, instance {instance_ok}, dataset {data_ok}")
    assert len(curves) == 4 and same_curves and same_ckpts
    assert model_ok and instance_ok and data_ok


def traced_training_oracle(monkeypatch):
    """Patch the oracle factory so the first oracle built (the SPO training oracle) logs its solve times."""
    from predopt import training

    trace = []
    real = training.make_oracle

    def make(descriptor, warmstart="none", node_limit=None):
        oracle = real(descriptor, warmstart, node_limit)
        if trace:
            return oracle
        trace.append(None)
        solve = oracle.solve

        def timed(instance, coeffs, hint=None):
            t = time.perf_counter()
            sol = solve(instance, coeffs, hint)
            trace.append((instance.id, time.perf_counter() - t))
            return sol

        oracle.solve = timed
        return oracle

    monkeypatch.setattr(training, "make_oracle", make)
    return trace


def budget_for_coverage(trace, fraction, train_count):
    """Solver seconds spent once ``fraction`` of the training days have been processed."""
    target = int(round(fraction * train_count))
    spent, done, last = 0.0, 0, None
    for inst_id, seconds in trace[1:]:
        if inst_id != last:
            if done == target:
                return spent
            done, last = done + 1, inst_id
        spent += seconds
    return spent


@pytest.mark.criterion(8, "hard-like instance, budget for 50-80% of days: SPO-relax <= best MSE-r epoch")
def test_criterion_8_budgeted_spo_relax(monkeypatch, detail):
    t0 = time.perf_counter()
    td, m0 = scheduling_training_data("hard-like", 0, 200)
    _, mse_curve = train(td, m0, TrainConfig(regime="mse-r", oracle="sched-relax", learning_rate=0.01,
                                             momentum=0.5, max_epochs=8, eval_oracle="sched-relax"))
    mse_best = min(p.test_regret for p in mse_curve.points if p.epoch > 0)
    spo = dict(regime="spo", oracle="sched-relax", learning_rate=0.003, momentum=0.9, solve_warmstart="basis",
               warmstart_learning_epochs=5, mse_learning_rate=0.01, eval_oracle="sched-relax", test_stride=100)
    trace = traced_training_oracle(monkeypatch)
    train(td, m0, TrainConfig(max_epochs=1, **spo))
    budget = budget_for_coverage(trace, 0.65, len(td.train))
    monkeypatch.undo()
    _, curve = train(td, m0, TrainConfig(max_epochs=3, solver_time_budget_seconds=budget, **spo))
    coverage = curve.metadata["instances_seen"] / curve.metadata["train_instances"]
    spo_final = curve.final_test_regret
    minutes = (time.perf_counter() - t0) / 60
    detail(f"budget {budget:.1f} s covered {coverage:.0%} of days; spo-relax {spo_final:.0f} vs best mse-r "
           f"epoch {mse_best:.0f}; {minutes:.1f} min")
    assert curve.metadata["stopped"] == "budget"
    assert 0.5 <= coverage <= 0.8
    assert spo_final <= mse_best
    assert minutes < 30
