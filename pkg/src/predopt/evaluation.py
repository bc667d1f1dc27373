"""Regret over splits, learning curves, and multi-seed aggregation."""

from __future__ import annotations

import hashlib
import json
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .core import Oracle, RegretValue, SolverError, canonicalize, regret

CURVE_COLUMNS = ("epoch", "solver_s", "wall_s", "train_loss", "val_regret", "test_regret")
TIMING_COLUMNS = ("solver_s", "wall_s")


@dataclass
class SplitRegret:
    total: float
    per_instance: list
    seconds: float = 0.0
    failed: list = field(default_factory=list)

    @property
    def partial(self) -> bool:
        return bool(self.failed)

    @property
    def vacuous(self) -> bool:
        return not self.per_instance and not self.failed

    @property
    def mean(self) -> float:
        return self.total / len(self.per_instance) if self.per_instance else 0.0


class TrueSolutionCache(dict):
    """instance id -> v*(theta) under one oracle; filled lazily, never evicted."""

    def __init__(self, oracle_name: str):
        super().__init__()
        self.oracle_name = oracle_name


def evaluate_split(model, split, instances, oracle: Oracle,
                   cache: Optional[TrueSolutionCache] = None) -> SplitRegret:
    """Sum over days of regret(theta, model prediction) under ``oracle``.

    Instances whose solve fails are flagged in ``failed`` and left out of
    the total; the result is then ``partial``.
    """
    t0 = time.perf_counter()
    per, failed = [], []
    for i, inst in enumerate(instances):
        theta = split.y[i]
        pred = model.predict(split.X[i])
        true_sol = None if cache is None else cache.get(inst.id)
        try:
            if true_sol is None and cache is not None:
                true_sol = oracle.solve(inst.as_minimize(), canonicalize(inst, theta))
                cache[inst.id] = true_sol
            r = regret(inst, theta, pred, oracle, true_solution=true_sol)
        except SolverError as exc:
            failed.append((inst.id, str(exc)))
            continue
        per.append(RegretValue(r.reported, r.eval_oracle, r.exact))
    total = sum(r.value for r in per)
    return SplitRegret(float(total), per, time.perf_counter() - t0, failed)


# learning curves ----------------------------------------------------------------

@dataclass
class CurvePoint:
    epoch: int
    solver_s: float
    wall_s: float
    train_loss: float
    val_regret: Optional[float] = None
    test_regret: Optional[float] = None


@dataclass
class LearningCurve:
    points: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)
    best_model: object = field(default=None, repr=False, compare=False)

    def append(self, point: CurvePoint):
        if self.points:
            last = self.points[-1]
            if point.epoch <= last.epoch:
                raise ValueError("epochs must be strictly increasing")
            if point.solver_s < last.solver_s or point.wall_s < last.wall_s:
                raise ValueError("cumulative times must be nondecreasing")
        self.points.append(point)

    def column(self, name: str) -> np.ndarray:
        return np.array([np.nan if getattr(p, name) is None else getattr(p, name) for p in self.points],
                        dtype=float)

    @property
    def final_test_regret(self) -> Optional[float]:
        for p in reversed(self.points):
            if p.test_regret is not None:
                return p.test_regret
        return None

    @property
    def reported_test_regret(self) -> Optional[float]:
        """Test regret of the returned model: the selected epoch if a selection was made, else the last."""
        selected = self.metadata.get("selected_test_regret")
        return self.final_test_regret if selected is None else float(selected)

    def per_epoch_solver_seconds(self) -> np.ndarray:
        return np.diff(self.column("solver_s"))


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def _parse(text: str, integer=False):
    if text == "":
        return None
    return int(text) if integer else float(text)


def format_curve(curve: LearningCurve, include_timing: bool = True) -> str:
    lines = [f"# {k}: {json.dumps(v, sort_keys=True)}" for k, v in sorted(curve.metadata.items())]
    cols = [c for c in CURVE_COLUMNS if include_timing or c not in TIMING_COLUMNS]
    lines.append(",".join(cols))
    for p in curve.points:
        lines.append(",".join(_fmt(getattr(p, c)) for c in cols))
    return "\n".join(lines) + "\n"


def parse_curve(text: str) -> LearningCurve:
    meta = {}
    curve = LearningCurve()
    header = None
    for raw in text.splitlines():
        if raw.startswith("# "):
            key, _, value = raw[2:].partition(": ")
            meta[key] = json.loads(value)
            continue
        if not raw.strip():
            continue
        fields = raw.split(",")
        if header is None:
            header = fields
            if list(header) != list(CURVE_COLUMNS):
                raise ValueError(f"unexpected curve header {raw!r}")
            continue
        row = dict(zip(header, fields))
        curve.points.append(CurvePoint(_parse(row["epoch"], True), _parse(row["solver_s"]),
                                       _parse(row["wall_s"]), _parse(row["train_loss"]),
                                       _parse(row["val_regret"]), _parse(row["test_regret"])))
    curve.metadata = meta
    return curve


def save_curve(curve: LearningCurve, path):
    with open(path, "w") as fh:
        fh.write(format_curve(curve))


def load_curve(path) -> LearningCurve:
    with open(path) as fh:
        return parse_curve(fh.read())


def config_digest(config: dict) -> str:
    """Short stable hash of a configuration mapping (seed excluded)."""
    clean = {k: v for k, v in config.items() if k != "seed"}
    return hashlib.sha256(json.dumps(clean, sort_keys=True, default=str).encode()).hexdigest()[:12]


def mse_vs_regret_trace(curve: LearningCurve):
    """Aligned (epochs, train MSE, validation regret) series for plotting."""
    regret_col = curve.column("val_regret")
    if not curve.points or np.all(np.isnan(regret_col)):
        raise ValueError("curve has no validation regret column")
    return curve.column("epoch").astype(int), curve.column("train_loss"), regret_col


# aggregation ----------------------------------------------------------------------

@dataclass
class AggregateRow:
    group: tuple
    seeds: list
    mean: float
    sd: float
    finals: list
    mean_curve: dict  # column -> per-epoch mean, truncated to the shortest run


@dataclass
class AggregateReport:
    rows: list
    group_keys: tuple

    def row(self, *group) -> AggregateRow:
        for r in self.rows:
            if r.group == tuple(group):
                return r
        raise KeyError(group)


def aggregate(curves: Sequence[LearningCurve], group_key: Union[str, Sequence[str], Callable]) -> AggregateReport:
    """Mean and sample sd of reported test regret per group of seeds."""
    if callable(group_key):
        keyfn, names = group_key, ("group",)
    else:
        names = (group_key,) if isinstance(group_key, str) else tuple(group_key)
        keyfn = lambda c: tuple(c.metadata.get(k) for k in names)  # noqa: E731
    groups: dict = {}
    for c in curves:
        k = keyfn(c)
        groups.setdefault(k if isinstance(k, tuple) else (k,), []).append(c)
    rows = []
    for key, members in groups.items():
        digests = {m.metadata.get("config_digest") for m in members}
        if len(digests) > 1:
            raise ValueError(f"group {key} mixes configurations {sorted(map(str, digests))}")
        if len(members) < 2:
            raise ValueError(f"group {key} has {len(members)} seed(s); need at least 2")
        finals = [m.reported_test_regret for m in members]
        if any(f is None for f in finals):
            raise ValueError(f"group {key} has a curve without test regret")
        shortest = min(len(m.points) for m in members)
        mean_curve = {}
        for col in CURVE_COLUMNS:
            stacked = np.array([m.column(col)[:shortest] for m in members])
            mean_curve[col] = np.nanmean(stacked, axis=0) if not np.all(np.isnan(stacked)) else stacked[0]
        rows.append(AggregateRow(key, [m.metadata.get("seed") for m in members],
                                 float(np.mean(finals)), float(np.std(finals, ddof=1)), finals, mean_curve))
    return AggregateReport(rows, names)


def format_report(report: AggregateReport) -> str:
    cols = list(report.group_keys) + ["n_seeds", "seeds", "mean_final_test_regret", "sd_final_test_regret"]
    lines = [",".join(cols)]
    for r in report.rows:
        seeds = " ".join(str(s) for s in r.seeds)
        lines.append(",".join([*(str(g) for g in r.group), str(len(r.seeds)), seeds, repr(r.mean), repr(r.sd)]))
    return "\n".join(lines) + "\n"


def format_mean_curves(report: AggregateReport) -> str:
    cols = list(report.group_keys) + list(CURVE_COLUMNS)
    lines = [",".join(cols)]
    for r in report.rows:
        n = len(r.mean_curve["epoch"])
        for i in range(n):
            vals = []
            for c in CURVE_COLUMNS:
                v = r.mean_curve[c][i]
                vals.append("" if math.isnan(v) else repr(float(v)))
            lines.append(",".join([*(str(g) for g in r.group), *vals]))
    return "\n".join(lines) + "\n"
