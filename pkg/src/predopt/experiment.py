"""Experiment legs (problem x regime x seed): build, train, evaluate, write files.

Configuration is a JSON object; see :class:`ExperimentConfig` for the keys.
Environment overrides: ``PREDOPT_OUTPUT_DIR`` (output directory) and
``PREDOPT_JOBS`` (worker processes for independent legs).
"""

from __future__ import annotations

import dataclasses
import json
import logging
import os
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .data import ingest_csv, split_dataset, synthesize, to_weighted_knapsack
from .evaluation import aggregate, format_mean_curves, format_report, load_curve, save_curve
from .model import LinearModel, save_model
from .problems import ProblemSpec, constraint_data, day_instances, default_eval_oracle, oracle_descriptor
from .scheduling import save_instance
from .training import TrainConfig, TrainingData, train

log = logging.getLogger(__name__)

UNWEIGHTED_CAPACITIES = tuple(range(5, 50, 5))
WEIGHTED_CAPACITIES = tuple(range(30, 240, 30))
_TRAIN_FIELDS = {f.name for f in dataclasses.fields(TrainConfig)}


@dataclass
class RegimeSpec:
    """A named training regime; ``overrides`` are TrainConfig fields."""

    name: str
    regime: str
    oracle: Optional[str] = None  # family-neutral kind (exact, relax, greedy, gap:<g>) or descriptor
    overrides: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d: dict) -> "RegimeSpec":
        d = dict(d)
        name = d.pop("name", None)
        regime = d.pop("regime")
        oracle = d.pop("oracle", None)
        unknown = set(d) - _TRAIN_FIELDS
        if unknown:
            raise ValueError(f"regime {name or regime}: unknown fields {sorted(unknown)}")
        if name is None:
            name = regime if oracle is None else f"{regime}-{oracle}"
        return cls(name, regime, oracle, d)


@dataclass
class ExperimentConfig:
    problem: str = "knapsack-unweighted"
    capacities: list = field(default_factory=lambda: [10])
    sched_kind: str = "easy-10"
    sched_seed: int = 0
    regimes: list = field(default_factory=lambda: [RegimeSpec("mse-r", "mse-r", "exact"),
                                                   RegimeSpec("spo-relax", "spo", "relax")])
    seeds: list = field(default_factory=lambda: [0, 1, 2])
    train: dict = field(default_factory=dict)  # TrainConfig defaults shared by all regimes
    data: dict = field(default_factory=lambda: {"source": "synthetic", "day_count": 200})
    weighted_seed: Optional[int] = None  # None: follow the leg seed
    eval_oracle: Optional[str] = None  # None: exact for knapsack/easy scheduling, relax for hard-like
    grid: Optional[dict] = None  # mse-r grid over learning_rate and momentum
    output_dir: str = "runs"

    def __post_init__(self):
        self.regimes = [r if isinstance(r, RegimeSpec) else RegimeSpec.from_dict(r) for r in self.regimes]
        unknown = set(self.train) - _TRAIN_FIELDS
        if unknown:
            raise ValueError(f"unknown train fields {sorted(unknown)}")
        if not self.seeds:
            raise ValueError("at least one seed is required")
        names = [r.name for r in self.regimes]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate regime names {names}")
        if self.data.get("source") not in ("synthetic", "csv"):
            raise ValueError("data.source must be 'synthetic' or 'csv'")
        self.problem_specs()  # validates problem names and capacities

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["regimes"] = [{"name": r.name, "regime": r.regime, "oracle": r.oracle, **r.overrides}
                        for r in self.regimes]
        return d

    def problem_specs(self) -> list:
        if self.problem == "scheduling":
            return [ProblemSpec("scheduling", sched_kind=self.sched_kind, sched_seed=self.sched_seed)]
        return [ProblemSpec(self.problem, capacity=int(c)) for c in self.capacities]


@dataclass
class Leg:
    spec: ProblemSpec
    regime: RegimeSpec
    seed: int

    @property
    def name(self) -> str:
        return f"{self.spec.label}__{self.regime.name}__s{self.seed}"


@dataclass
class LegResult:
    leg: str
    curve_path: Optional[str] = None
    checkpoint_path: Optional[str] = None
    error: Optional[str] = None


@dataclass
class ExperimentResult:
    legs: list
    report_path: Optional[str] = None
    mean_curves_path: Optional[str] = None
    timing_path: Optional[str] = None

    @property
    def failures(self) -> list:
        return [r for r in self.legs if r.error]

    @property
    def ok(self) -> bool:
        return not self.failures


def load_dataset(config: ExperimentConfig, seed: int):
    src = config.data
    if src["source"] == "csv":
        ds = ingest_csv(src["path"])
    else:
        ds = synthesize(src.get("seed", seed), int(src.get("day_count", 200)),
                        int(src.get("feature_count", 8)), float(src.get("noise_scale", 1.0)),
                        float(src.get("nonlinearity", 2.0)))
    if config.problem == "knapsack-weighted":
        ds = to_weighted_knapsack(ds, seed if config.weighted_seed is None else config.weighted_seed)
    return ds


def build_training_data(spec: ProblemSpec, dataset):
    train_split, val, test, std = split_dataset(dataset)
    cdata = constraint_data(spec, dataset)
    td = TrainingData(train_split, day_instances(train_split.days, cdata), val,
                      day_instances(val.days, cdata), test, day_instances(test.days, cdata))
    return td, std, cdata


def leg_train_config(config: ExperimentConfig, leg: Leg) -> TrainConfig:
    kw = dict(config.train)
    kw.update(leg.regime.overrides)
    kw["regime"] = leg.regime.regime
    kw["seed"] = leg.seed
    if leg.regime.oracle is not None:
        kw["oracle"] = oracle_descriptor(leg.spec.problem, leg.regime.oracle)
    elif leg.regime.regime != "mse":
        kw["oracle"] = default_eval_oracle(leg.spec)
    if "eval_oracle" not in kw:
        kw["eval_oracle"] = (oracle_descriptor(leg.spec.problem, config.eval_oracle) if config.eval_oracle
                             else default_eval_oracle(leg.spec))
    if "test_stride" not in kw and leg.spec.problem == "scheduling":
        kw["test_stride"] = 2
    return TrainConfig(**kw)


def run_leg(config: ExperimentConfig, leg: Leg, out: Path) -> LegResult:
    """Train and evaluate one leg; errors are captured with the leg identified."""
    try:
        dataset = load_dataset(config, leg.seed)
        td, std, cdata = build_training_data(leg.spec, dataset)
        tc = leg_train_config(config, leg)
        model = LinearModel.zeros(dataset.feature_count, std)
        grid = config.grid if tc.regime == "mse-r" else None
        model, curve = train(td, model, tc, grid)
        curve.metadata.update({"leg": leg.name, "regime_name": leg.regime.name, "problem": leg.spec.label})
        curve_path = out / "curves" / f"{leg.name}.csv"
        ckpt_path = out / "checkpoints" / f"{leg.name}.json"
        save_curve(curve, curve_path)
        model.metadata.update({"leg": leg.name, "regime": tc.regime, "seed": leg.seed})
        save_model(model, ckpt_path)
        if curve.best_model is not None and tc.regime == "spo":
            save_model(curve.best_model, out / "checkpoints" / f"{leg.name}__best-val.json")
        if leg.spec.problem == "scheduling":
            inst_path = out / "instances" / f"{leg.spec.label}.txt"
            if not inst_path.exists():
                save_instance(cdata, inst_path)
        return LegResult(leg.name, str(curve_path), str(ckpt_path))
    except Exception as exc:  # a failed leg must not take down the sweep
        log.error("leg %s failed: %s", leg.name, exc)
        return LegResult(leg.name, error=f"{type(exc).__name__}: {exc}\n{traceback.format_exc()}")


def _run_leg_job(args):
    cfg_dict, leg_dict, out = args
    config = ExperimentConfig.from_dict(cfg_dict)
    spec = ProblemSpec(**leg_dict["spec"])
    regime = next(r for r in config.regimes if r.name == leg_dict["regime"])
    return run_leg(config, Leg(spec, regime, leg_dict["seed"]), Path(out))


def legs_of(config: ExperimentConfig) -> list:
    return [Leg(spec, regime, int(seed)) for spec in config.problem_specs()
            for regime in config.regimes for seed in config.seeds]


def output_dir(config: ExperimentConfig) -> Path:
    return Path(os.environ.get("PREDOPT_OUTPUT_DIR") or config.output_dir)


def job_count(default: int = 1) -> int:
    raw = os.environ.get("PREDOPT_JOBS")
    if not raw:
        return default
    jobs = int(raw)
    if jobs < 1:
        raise ValueError("PREDOPT_JOBS must be a positive integer")
    return jobs


def format_epoch_timing(curves) -> str:
    """Per-epoch solver seconds (mean and sample sd over all epochs of all seeds) per regime and problem."""
    groups: dict = {}
    for c in curves:
        key = (c.metadata.get("problem"), c.metadata.get("regime_name"))
        groups.setdefault(key, []).extend(c.per_epoch_solver_seconds()[1:].tolist()
                                          if c.metadata.get("regime") != "spo" else
                                          _spo_epoch_seconds(c))
    lines = ["problem,regime,epochs,mean_epoch_solver_s,sd_epoch_solver_s"]
    for (problem, regime), vals in groups.items():
        vals = np.asarray(vals, dtype=float)
        sd = float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0
        mean = float(np.mean(vals)) if len(vals) else float("nan")
        lines.append(f"{problem},{regime},{len(vals)},{mean!r},{sd!r}")
    return "\n".join(lines) + "\n"


def _spo_epoch_seconds(curve) -> list:
    pre = int(curve.metadata.get("config", {}).get("warmstart_learning_epochs", 0))
    return curve.per_epoch_solver_seconds()[pre:].tolist()


def write_reports(curves, out: Path) -> tuple:
    out.mkdir(parents=True, exist_ok=True)
    report = aggregate(curves, ("problem", "regime_name"))
    report_path, mean_path, timing_path = out / "report.csv", out / "mean_curves.csv", out / "epoch_timing.csv"
    report_path.write_text(format_report(report))
    mean_path.write_text(format_mean_curves(report))
    timing_path.write_text(format_epoch_timing(curves))
    return report_path, mean_path, timing_path


def run_experiment(config: ExperimentConfig, jobs: Optional[int] = None) -> ExperimentResult:
    out = output_dir(config)
    for sub in ("curves", "checkpoints", "instances"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps(config.to_dict(), indent=1, sort_keys=True) + "\n")
    legs = legs_of(config)
    jobs = job_count() if jobs is None else jobs
    if jobs > 1 and len(legs) > 1:
        cfg = config.to_dict()
        args = [(cfg, {"spec": dataclasses.asdict(leg.spec), "regime": leg.regime.name, "seed": leg.seed},
                 str(out)) for leg in legs]
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_leg_job, args))
    else:
        results = [run_leg(config, leg, out) for leg in legs]
    result = ExperimentResult(results)
    done = [load_curve(r.curve_path) for r in results if not r.error]
    if result.failures:
        (out / "failures.txt").write_text("".join(f"{r.leg}\n{r.error}\n" for r in result.failures))
    if len(config.seeds) >= 2 and done:
        try:
            paths = write_reports(done, out)
        except ValueError as exc:
            log.error("aggregation failed: %s", exc)
            result.legs.append(LegResult("aggregate", error=str(exc)))
        else:
            result.report_path, result.mean_curves_path, result.timing_path = map(str, paths)
    return result
