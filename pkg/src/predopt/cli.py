"""Command line: synth, train, sweep, eval, report."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .data import emit_csv, synthesize, to_weighted_knapsack
from .evaluation import evaluate_split, load_curve
from .experiment import (ExperimentConfig, Leg, RegimeSpec, build_training_data, load_dataset, output_dir,
                         run_experiment, run_leg, write_reports)
from .model import load_model
from .problems import PROBLEMS, make_oracle, oracle_descriptor


def _add_problem_args(p):
    p.add_argument("--config", help="JSON experiment config; flags given explicitly override it")
    p.add_argument("--problem", choices=PROBLEMS)
    p.add_argument("--capacity", type=int)
    p.add_argument("--sched-kind")
    p.add_argument("--sched-seed", type=int)
    p.add_argument("--csv", help="price CSV (day,slot,<features>,actual_price); default synthetic data")
    p.add_argument("--days", type=int, help="synthetic day count")
    p.add_argument("--seed", type=int, default=0, help="leg seed; all randomness derives from it")


def _config_from_args(args) -> ExperimentConfig:
    base = {}
    if args.config:
        with open(args.config) as fh:
            base = json.load(fh)
    if args.problem:
        base["problem"] = args.problem
    if args.capacity is not None:
        base["capacities"] = [args.capacity]
    if args.sched_kind:
        base["sched_kind"] = args.sched_kind
    if args.sched_seed is not None:
        base["sched_seed"] = args.sched_seed
    data = dict(base.get("data", {"source": "synthetic", "day_count": 200}))
    if args.csv:
        data = {"source": "csv", "path": args.csv}
    if args.days is not None:
        data["day_count"] = args.days
    base["data"] = data
    if getattr(args, "output_dir", None):
        base["output_dir"] = args.output_dir
    return ExperimentConfig.from_dict(base)


def cmd_synth(args) -> int:
    ds = synthesize(args.seed, args.days, args.features, args.noise_scale, args.nonlinearity)
    if args.weighted:
        ds = to_weighted_knapsack(ds, args.seed)
        print("weights:", " ".join(str(int(w)) for w in ds.weights), file=sys.stderr)
    emit_csv(ds, args.out)
    print(f"wrote {len(ds)} days to {args.out}")
    return 0


def cmd_train(args) -> int:
    config = _config_from_args(args)
    overrides = {k: v for k, v in {
        "learning_rate": args.learning_rate, "momentum": args.momentum, "max_epochs": args.epochs,
        "solver_time_budget_seconds": args.budget, "warmstart_learning_epochs": args.warmstart_epochs,
        "solve_warmstart": args.solve_warmstart, "node_limit": args.node_limit,
        "test_stride": args.test_stride}.items() if v is not None}
    name = args.name or (args.regime if args.oracle is None else f"{args.regime}-{args.oracle}")
    regime = RegimeSpec(name, args.regime, args.oracle, overrides)
    config.regimes = [regime]
    config.seeds = [args.seed]
    out = output_dir(config)
    for sub in ("curves", "checkpoints", "instances"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    spec = config.problem_specs()[0]
    result = run_leg(config, Leg(spec, regime, args.seed), out)
    if result.error:
        print(f"leg {result.leg} failed: {result.error}", file=sys.stderr)
        return 1
    curve = load_curve(result.curve_path)
    print(f"{result.leg}: final test regret {curve.final_test_regret}; curve {result.curve_path}; "
          f"checkpoint {result.checkpoint_path}")
    return 0


def cmd_sweep(args) -> int:
    config = ExperimentConfig.load(args.config)
    if args.output_dir:
        config.output_dir = args.output_dir
    result = run_experiment(config, jobs=args.jobs)
    for leg in result.legs:
        print(f"{'FAIL' if leg.error else 'ok  '} {leg.leg}")
    if result.report_path:
        print(f"report: {result.report_path}")
    if result.failures:
        print(f"{len(result.failures)} leg(s) failed", file=sys.stderr)
        return 1
    return 0


def cmd_eval(args) -> int:
    config = _config_from_args(args)
    spec = config.problem_specs()[0]
    model = load_model(args.checkpoint)
    td, _, _ = build_training_data(spec, load_dataset(config, args.seed))
    split, instances = {"train": (td.train, td.train_instances), "validation": (td.val, td.val_instances),
                        "test": (td.test, td.test_instances)}[args.split]
    oracle = make_oracle(oracle_descriptor(spec.problem, args.oracle), node_limit=args.node_limit)
    res = evaluate_split(model, split, instances, oracle)
    print(f"{args.split} regret ({oracle.name}): total {res.total!r} over {len(res.per_instance)} days"
          + (f"; {len(res.failed)} failed (partial)" if res.partial else ""))
    return 1 if res.partial else 0


def cmd_report(args) -> int:
    paths = []
    for p in args.curves:
        p = Path(p)
        paths.extend(sorted(p.glob("*.csv")) if p.is_dir() else [p])
    curves = [load_curve(p) for p in paths]
    out = Path(args.out)
    report_path, mean_path, timing_path = write_reports(curves, out)
    print(report_path.read_text(), end="")
    print(f"wrote {report_path}, {mean_path}, {timing_path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="predopt", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic price CSV")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--days", type=int, default=200)
    p.add_argument("--features", type=int, default=8)
    p.add_argument("--noise-scale", type=float, default=1.0)
    p.add_argument("--nonlinearity", type=float, default=2.0)
    p.add_argument("--weighted", action="store_true", help="apply the weighted-knapsack value transform")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train and evaluate one leg")
    _add_problem_args(p)
    p.add_argument("--regime", choices=("mse", "mse-r", "spo"), default="spo")
    p.add_argument("--oracle", help="exact, relax, greedy, gap:<g>, or a full descriptor")
    p.add_argument("--name", help="regime label used in file names")
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--momentum", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--budget", type=float, help="solver-time budget in seconds")
    p.add_argument("--warmstart-epochs", type=int, help="MSE pre-training epochs before SPO")
    p.add_argument("--solve-warmstart", choices=("none", "basis", "incumbent", "bound"))
    p.add_argument("--node-limit", type=int)
    p.add_argument("--test-stride", type=int)
    p.add_argument("--output-dir")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sweep", help="run every leg of a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--output-dir")
    p.add_argument("--jobs", type=int)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("eval", help="regret of a checkpoint on one split")
    _add_problem_args(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", choices=("train", "validation", "test"), default="test")
    p.add_argument("--oracle", default="exact")
    p.add_argument("--node-limit", type=int)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", help="aggregate curve files")
    p.add_argument("curves", nargs="+", help="curve files or directories of them")
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
