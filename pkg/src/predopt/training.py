"""Training regimes: two-stage MSE, MSE-r, and SPO+ with pluggable oracles.

One batch is one day: the 48 predictions of a day form the coefficient
vector of one optimization instance. Batch order is reshuffled every epoch
from the run seed.
"""

from __future__ import annotations

import dataclasses
import itertools
import logging
import time
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import SolverError, canonicalize, spo_subgradient
from .data import Split
from .evaluation import CurvePoint, LearningCurve, TrueSolutionCache, config_digest, evaluate_split
from .model import DivergenceError, LinearModel, OptimizerState, apply_gradient, mse_gradient, mse_loss
from .problems import make_oracle

log = logging.getLogger(__name__)

REGIMES = ("mse", "mse-r", "spo")
DEFAULT_PRETRAIN_EPOCHS = 6
DEFAULT_GRID = {"learning_rate": (1e-4, 1e-3, 1e-2, 1e-1), "momentum": (0.0, 0.5, 0.9)}


@dataclass
class TrainConfig:
    regime: str = "spo"
    oracle: str = "knap-relax"  # SPO training oracle, or the validation oracle for mse-r
    learning_rate: float = 0.01
    momentum: float = 0.0
    max_epochs: int = 10
    seed: int = 0
    solver_time_budget_seconds: Optional[float] = None
    warmstart_learning_epochs: int = 0
    mse_learning_rate: Optional[float] = None  # for MSE pre-training; defaults to learning_rate
    solve_warmstart: str = "none"
    eval_oracle: Optional[str] = None  # test regret; None disables test evaluation
    test_stride: int = 1
    node_limit: Optional[int] = None

    def __post_init__(self):
        if self.regime not in REGIMES:
            raise ValueError(f"regime must be one of {REGIMES}")
        if self.learning_rate <= 0 or not 0 <= self.momentum < 1:
            raise ValueError("need learning_rate > 0 and momentum in [0, 1)")
        if self.max_epochs < 0 or self.warmstart_learning_epochs < 0:
            raise ValueError("epoch counts must be nonnegative")
        if self.warmstart_learning_epochs and self.regime != "spo":
            raise ValueError("warmstart_learning_epochs only applies to the spo regime")
        if self.test_stride < 1:
            raise ValueError("test_stride must be positive")

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass
class TrainingData:
    """Splits plus one OptInstance per day of each split."""

    train: Split
    train_instances: list
    val: Optional[Split] = None
    val_instances: list = field(default_factory=list)
    test: Optional[Split] = None
    test_instances: list = field(default_factory=list)

    def __post_init__(self):
        for split, insts in ((self.train, self.train_instances), (self.val, self.val_instances),
                             (self.test, self.test_instances)):
            if split is not None and len(split) != len(insts):
                raise ValueError(f"{split.name}: {len(split)} days but {len(insts)} instances")
            for inst in insts:
                if inst.variable_count != split.y.shape[1]:
                    raise ValueError("every day-batch must match its instance's coefficient count")


class TrainingAborted(RuntimeError):
    """Training stopped on an unrecoverable error; carries the last good model and curve."""

    def __init__(self, message, model=None, curve=None):
        super().__init__(message)
        self.model = model
        self.curve = curve


def train_mse_loss(model: LinearModel, split: Split) -> float:
    return mse_loss(model.predict(split.X.reshape(-1, split.X.shape[-1])), split.y.reshape(-1))


class _Recorder:
    """Curve bookkeeping shared by the regimes: clocks, monitors, caches."""

    def __init__(self, data: TrainingData, config: TrainConfig, val_oracle: Optional[str],
                 count_validation: bool):
        self.data = data
        self.config = config
        self.t0 = time.perf_counter()
        self.solver_s = 0.0
        self.count_validation = count_validation
        self.val_oracle = make_oracle(val_oracle, node_limit=config.node_limit) if (
            val_oracle and data.val is not None and len(data.val)) else None
        self.val_cache = TrueSolutionCache(val_oracle or "")
        self.test_oracle = make_oracle(config.eval_oracle, node_limit=config.node_limit) if (
            config.eval_oracle and data.test is not None and len(data.test)) else None
        self.test_cache = TrueSolutionCache(config.eval_oracle or "")
        meta = config.as_dict()
        self.curve = LearningCurve(metadata={
            "regime": config.regime, "train_oracle": config.oracle if config.regime == "spo" else None,
            "val_oracle": val_oracle if self.val_oracle else None,
            "eval_oracle": config.eval_oracle, "seed": config.seed, "config_digest": config_digest(meta),
            "config": meta,
        })

    def val_regret(self, model) -> Optional[float]:
        if self.val_oracle is None:
            return None
        res = evaluate_split(model, self.data.val, self.data.val_instances, self.val_oracle, self.val_cache)
        if self.count_validation:
            self.solver_s += res.seconds
        if res.partial:
            warnings.warn(f"validation regret incomplete ({len(res.failed)} solver failures); epoch not scored",
                          stacklevel=3)
            return None
        return res.total

    def test_regret(self, model) -> Optional[float]:
        if self.test_oracle is None:
            return None
        res = evaluate_split(model, self.data.test, self.data.test_instances, self.test_oracle, self.test_cache)
        return None if res.partial else res.total

    def record(self, epoch: int, model, final: bool = False) -> CurvePoint:
        val = self.val_regret(model)
        test = None
        if final or epoch % self.config.test_stride == 0:
            test = self.test_regret(model)
        point = CurvePoint(epoch, self.solver_s, time.perf_counter() - self.t0,
                           train_mse_loss(model, self.data.train), val, test)
        self.curve.append(point)
        return point


def _mse_epoch(model, state, split: Split, rng):
    for i in rng.permutation(len(split)):
        pred = model.predict(split.X[i])
        apply_gradient(model, state, split.X[i], mse_gradient(pred, split.y[i]))


def _select_best(points, models):
    """Earliest epoch with minimal validation regret (epoch 0 only if nothing else)."""
    scored = [(p.val_regret, p.epoch) for p in points if p.val_regret is not None and p.epoch > 0]
    if not scored:
        scored = [(p.val_regret, p.epoch) for p in points if p.val_regret is not None]
    if not scored:
        return None, None
    best_val, best_epoch = min(scored, key=lambda t: (t[0], t[1]))
    return best_epoch, models[best_epoch]


def train_mse(data: TrainingData, model: LinearModel, config: TrainConfig, _val_oracle=None):
    """Two-stage regression: minimize the squared error of the day-batches.

    With the plain ``mse`` regime no oracle is called during training; the
    curve's test column is filled only if ``config.eval_oracle`` is set.
    """
    model = model.copy()
    rec = _Recorder(data, config, _val_oracle, count_validation=True)
    rng = np.random.default_rng(config.seed)
    state = OptimizerState(config.learning_rate, config.momentum)
    models = {0: model.copy()}
    rec.record(0, model, final=config.max_epochs == 0)
    for epoch in range(1, config.max_epochs + 1):
        try:
            _mse_epoch(model, state, data.train, rng)
        except DivergenceError as exc:
            raise TrainingAborted(f"MSE training diverged in epoch {epoch}: {exc}",
                                  models[epoch - 1], rec.curve) from exc
        loss = train_mse_loss(model, data.train)
        if not np.isfinite(loss):
            raise TrainingAborted(f"non-finite training loss in epoch {epoch}", models[epoch - 1], rec.curve)
        models[epoch] = model.copy()
        rec.record(epoch, model, final=epoch == config.max_epochs)
    rec.curve.best_model = models
    return model, rec.curve


def train_mse_r(data: TrainingData, model: LinearModel, config: TrainConfig,
                grid: Optional[dict] = None):
    """MSE training with epoch selection (and optional grid search) on validation regret.

    ``config.oracle`` is the oracle used for validation regret. ``grid``
    maps ``learning_rate`` and ``momentum`` to candidate values; the
    combination with the lowest selected validation regret wins (ties go to
    the first combination in grid order). Returns the selected checkpoint.
    """
    if data.val is None or len(data.val) == 0:
        raise ValueError("mse-r needs a nonempty validation split")
    if grid:
        results = []
        for lr, mu in itertools.product(grid.get("learning_rate", (config.learning_rate,)),
                                        grid.get("momentum", (config.momentum,))):
            cfg = dataclasses.replace(config, learning_rate=lr, momentum=mu)
            try:
                m, curve = train_mse_r(data, model, cfg)
            except TrainingAborted as exc:
                log.info("grid point lr=%g momentum=%g diverged: %s", lr, mu, exc)
                continue
            results.append((curve.metadata["selected_val_regret"], len(results), m, curve, lr, mu))
        if not results:
            raise TrainingAborted("every grid point diverged")
        best = min(results, key=lambda r: (r[0], r[1]))
        _, _, m, curve, lr, mu = best
        curve.metadata["grid"] = [{"learning_rate": r[4], "momentum": r[5], "val_regret": r[0]} for r in results]
        return m, curve

    _, curve = train_mse(data, model, config, _val_oracle=config.oracle)
    models = curve.best_model
    epoch, selected = _select_best(curve.points, models)
    if selected is None:
        raise TrainingAborted("no epoch has a validation regret", models[max(models)], curve)
    sel_point = next(p for p in curve.points if p.epoch == epoch)
    curve.metadata["selected_epoch"] = epoch
    curve.metadata["selected_val_regret"] = sel_point.val_regret
    if config.eval_oracle and data.test is not None and len(data.test):
        test = sel_point.test_regret
        if test is None:
            oracle = make_oracle(config.eval_oracle, node_limit=config.node_limit)
            test = evaluate_split(selected, data.test, data.test_instances, oracle).total
        curve.metadata["selected_test_regret"] = test
    curve.best_model = selected
    return selected.copy(), curve


def train_spo(data: TrainingData, model: LinearModel, config: TrainConfig):
    """SPO+ training: per day, step along v*(theta) - v*(2 theta_hat - theta).

    Optional MSE pre-training runs first for ``warmstart_learning_epochs``
    epochs. True solutions v*(theta) are cached per training day and solved
    by the training oracle. With a solver-time budget, training stops before
    the first oracle call made after the budget is spent; the partial epoch
    is recorded. Validation regret (training oracle) is monitored but not
    counted as solver time.
    """
    model = model.copy()
    oracle = make_oracle(config.oracle, config.solve_warmstart, config.node_limit)
    rec = _Recorder(data, config, config.oracle, count_validation=False)
    rng = np.random.default_rng(config.seed)
    cache = TrueSolutionCache(oracle.name)
    budget = config.solver_time_budget_seconds
    models = {0: model.copy()}
    rec.record(0, model, final=config.max_epochs + config.warmstart_learning_epochs == 0)
    epoch = 0

    if config.warmstart_learning_epochs:
        mse_state = OptimizerState(config.mse_learning_rate or config.learning_rate, config.momentum)
        for _ in range(config.warmstart_learning_epochs):
            epoch += 1
            try:
                _mse_epoch(model, mse_state, data.train, rng)
            except DivergenceError as exc:
                raise TrainingAborted(f"MSE pre-training diverged: {exc}", models[epoch - 1], rec.curve) from exc
            models[epoch] = model.copy()
            rec.record(epoch, model)

    state = OptimizerState(config.learning_rate, config.momentum)
    solves = 0
    seen = set()
    stopped = None
    for _ in range(config.max_epochs):
        epoch += 1
        for i in rng.permutation(len(data.train)):
            if budget is not None and rec.solver_s >= budget:
                stopped = "budget"
                break
            inst = data.train_instances[i]
            theta = data.train.y[i]
            X = data.train.X[i]
            true_sol = cache.get(inst.id)
            try:
                if true_sol is None:
                    t = time.perf_counter()
                    true_sol = oracle.solve(inst.as_minimize(), canonicalize(inst, theta))
                    rec.solver_s += time.perf_counter() - t
                    solves += 1
                    cache[inst.id] = true_sol
                    if budget is not None and rec.solver_s >= budget:
                        stopped = "budget"
                        break
                t = time.perf_counter()
                g, _, _ = spo_subgradient(inst, theta, model.predict(X), oracle, true_solution=true_sol)
                rec.solver_s += time.perf_counter() - t
                solves += 1
            except SolverError as exc:
                raise TrainingAborted(f"oracle {oracle.name} failed on training day {inst.id}: {exc}",
                                      models[epoch - 1], rec.curve) from exc
            seen.add(inst.id)
            try:
                apply_gradient(model, state, X, inst.sign * g)
            except DivergenceError as exc:
                raise TrainingAborted(f"SPO training diverged on day {inst.id}: {exc}",
                                      models[epoch - 1], rec.curve) from exc
        models[epoch] = model.copy()
        rec.record(epoch, model, final=True if stopped else epoch == config.max_epochs + config.warmstart_learning_epochs)
        if stopped:
            break

    best_epoch, best = _select_best(rec.curve.points, models)
    rec.curve.metadata.update({
        "oracle_calls": solves, "instances_seen": len(seen), "train_instances": len(data.train),
        "stopped": stopped or "max_epochs", "best_val_epoch": best_epoch,
    })
    rec.curve.best_model = best
    return model, rec.curve


def train(data: TrainingData, model: LinearModel, config: TrainConfig, grid: Optional[dict] = None):
    """Dispatch on ``config.regime``."""
    if config.regime == "mse":
        model, curve = train_mse(data, model, config)
        curve.best_model = None
        return model, curve
    if config.regime == "mse-r":
        return train_mse_r(data, model, config, grid)
    return train_spo(data, model, config)


def grid_points(grid: dict) -> Sequence[tuple]:
    return list(itertools.product(grid["learning_rate"], grid["momentum"]))
