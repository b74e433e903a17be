"""Command-line entry point.

Every subcommand accepts ``--config FILE`` (JSON or TOML), repeated
``--set section.key=value`` overrides, and ``--seed``.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import ConfigFileError, ExperimentConfig, apply_override
from .ddgnn import ModelParams, ModelShapeError, TrainingError
from .engine import ConfigurationError, Strategy
from .experiment import (ExperimentError, ReportFormatError, Models, collect_instance_experience,
                         collect_stream_experience, prepare_models, run_batch, run_experiment,
                         load_reports, train_demand_model, train_value_function, workload_axes)
from .report import ReportError, emit_report
from .search_tvf import Experience, TrainingFailure, ValueParams
from .stream import IngestionError, load_stream
from .workload import synth_workload

log = logging.getLogger("datawa")

SWEEP_KEYS = {"n_tasks", "n_workers", "reach", "availability", "task_valid"}


def _config(args) -> ExperimentConfig:
    return ExperimentConfig.load(args.config, args.set or [])


def _seed_list(text: str) -> list[int]:
    out: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if "-" in part[1:]:
            lo, hi = part.split("-", 1)
            out.extend(range(int(lo), int(hi) + 1))
        elif part:
            out.append(int(part))
    return out


def _load_models(args) -> Models:
    demand = ModelParams.load(args.demand) if getattr(args, "demand", None) else None
    tvf = ValueParams.load(args.tvf) if getattr(args, "tvf", None) else None
    return Models(demand, tvf)


# ---------------------------------------------------------------- commands

def cmd_synth(args) -> int:
    exp = _config(args).with_seed(args.seed)
    stream = synth_workload(exp.workload)
    stream.write(args.out)
    print(f"wrote {len(stream.workers)} workers and {len(stream.tasks)} tasks to {args.out}")
    return 0


def cmd_train_demand(args) -> int:
    exp = _config(args)
    history = [load_stream(p) for p in args.stream] if args.stream else None
    val = [load_stream(p) for p in args.val_stream] if args.val_stream else None
    res = train_demand_model(exp, args.seed, history, val)
    res.params.save(args.out, {"best_epoch": res.best_epoch, "seed": args.seed})
    if args.curve:
        res.write_curve(args.curve)
    best = res.curve[res.best_epoch].val_ap if res.curve else float("nan")
    print(f"best epoch {res.best_epoch}, validation AP {best:.4f}; saved {args.out}")
    return 0


def cmd_collect_experience(args) -> int:
    exp = _config(args)
    if args.source == "instances":
        t = exp.raw["tvf"]
        ex = collect_instance_experience(args.instances, args.seed, int(t["instance_workers"]),
                                         int(t["instance_tasks"]), exp.engine.max_len)
    else:
        demand = ModelParams.load(args.demand) if args.demand else None
        if args.stream:
            ex = collect_stream_experience(exp, demand, streams=[load_stream(p) for p in args.stream])
        else:
            seeds = [s + args.seed for s in exp.raw["tvf"]["experience_seeds"]]
            ex = collect_stream_experience(exp, demand, seeds=seeds)
    ex.save(args.out)
    print(f"collected {len(ex)} experience tuples into {args.out}")
    return 0


def cmd_train_tvf(args) -> int:
    exp = _config(args)
    ex = Experience.load(args.experience)
    res = train_value_function(exp, ex, args.seed)
    res.params.save(args.out, {"best_epoch": res.best_epoch, "seed": args.seed,
                               "tuples": len(ex)})
    if args.curve:
        with open(args.curve, "w") as fh:
            fh.write("epoch,train_loss,holdout_loss\n")
            for i, (a, b) in enumerate(zip(res.train_loss, res.holdout_loss)):
                fh.write(f"{i},{a!r},{b!r}\n")
    print(f"best epoch {res.best_epoch}, held-out loss "
          f"{res.holdout_loss[res.best_epoch] if res.best_epoch >= 0 else float('nan'):.5f}; "
          f"saved {args.out}")
    return 0


def cmd_simulate(args) -> int:
    exp = _config(args).with_seed(args.seed)
    stream = load_stream(args.stream) if args.stream else synth_workload(exp.workload)
    report = run_experiment(args.strategy, stream, exp.engine, _load_models(args), args.seed,
                            exp.to_dict(), workload_axes(exp.workload))
    text = json.dumps(report.to_dict(), indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text)
    print(f"{report.strategy}: assigned {report.assigned}/{report.n_tasks} tasks, "
          f"{report.plan_events} planning events, {report.expansions} expansions")
    return 0


def cmd_bench(args) -> int:
    exp = _config(args)
    b = exp.raw["bench"]
    strategies = args.strategies.split(",") if args.strategies else list(b["strategies"])
    for s in strategies:
        Strategy.parse(s)
    seeds = _seed_list(args.seeds) if args.seeds else [int(s) for s in b["seeds"]]
    seeds = [s + args.seed for s in seeds]
    axis = args.axis if args.axis is not None else b["axis"]
    values = json.loads(f"[{args.values}]") if args.values else list(b["values"])
    if axis and axis not in SWEEP_KEYS:
        raise ConfigFileError(f"cannot sweep {axis!r}; choose from {sorted(SWEEP_KEYS)}")
    models = prepare_models(exp, strategies, args.seed, _load_models(args))
    reports = []
    for v in (values if axis else [None]):
        e = exp
        if axis:
            val = [v, v] if axis == "reach" else v
            e = ExperimentConfig(apply_override(exp.raw, f"workload.{axis}={json.dumps(val)}"))
        reports += run_batch(e, strategies, seeds, models)
    files = emit_report(reports, args.out, figures=not args.no_figures)
    for s in strategies:
        rs = [r for r in reports if r.strategy == Strategy.parse(s).value]
        print(f"{Strategy.parse(s).value:8s} mean assigned {sum(r.assigned for r in rs) / len(rs):.2f} "
              f"over {len(rs)} runs")
    print(f"wrote {len(files)} files to {args.out}")
    return 0


def cmd_report(args) -> int:
    reports = []
    for p in args.inputs:
        reports += load_reports(p)
    files = emit_report(reports, args.out, figures=not args.no_figures)
    print(f"aggregated {len(reports)} runs into {len(files)} files under {args.out}")
    return 0


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON or TOML experiment config")
    common.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override a config entry, e.g. workload.n_tasks=600")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="datawa", description="Demand-aware spatial task assignment.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", parents=[common], help="generate a synthetic stream CSV")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("train-demand", parents=[common], help="train the demand model")
    s.add_argument("--stream", nargs="*", help="history streams (default: seeded synthetic history)")
    s.add_argument("--val-stream", nargs="*")
    s.add_argument("--out", required=True)
    s.add_argument("--curve", help="learning-curve CSV")
    s.set_defaults(func=cmd_train_demand)

    s = sub.add_parser("collect-experience", parents=[common],
                       help="record exact-search action values")
    s.add_argument("--source", choices=("streams", "instances"), default="streams")
    s.add_argument("--stream", nargs="*")
    s.add_argument("--demand", help="demand model; replays with forecasts when given")
    s.add_argument("--instances", type=int, default=12)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_collect_experience)

    s = sub.add_parser("train-tvf", parents=[common], help="train the task value function")
    s.add_argument("--experience", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--curve")
    s.set_defaults(func=cmd_train_tvf)

    s = sub.add_parser("simulate", parents=[common], help="run one strategy over one stream")
    s.add_argument("--stream", help="stream CSV (default: synthesize from config and seed)")
    s.add_argument("--strategy", default="DTA")
    s.add_argument("--demand")
    s.add_argument("--tvf")
    s.add_argument("--out", help="report JSON")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("bench", parents=[common], help="seeded batch, optionally over one axis")
    s.add_argument("--strategies", help="comma list, default from config")
    s.add_argument("--seeds", help="e.g. 0-19 or 1,2,5")
    s.add_argument("--axis", help="workload axis to sweep")
    s.add_argument("--values", help="comma list of axis values")
    s.add_argument("--demand")
    s.add_argument("--tvf")
    s.add_argument("--out", required=True)
    s.add_argument("--no-figures", action="store_true")
    s.set_defaults(func=cmd_bench)

    s = sub.add_parser("report", parents=[common], help="aggregate saved runs")
    s.add_argument("inputs", nargs="+", help="summary.json files or directories holding one")
    s.add_argument("--out", required=True)
    s.add_argument("--no-figures", action="store_true")
    s.set_defaults(func=cmd_report)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigFileError, ConfigurationError, IngestionError, ExperimentError, ReportError, ReportFormatError,
            ModelShapeError, TrainingError, TrainingFailure, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
