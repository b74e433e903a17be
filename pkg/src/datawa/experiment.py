"""Running strategies over streams, and the training pipelines that feed them."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .config import ExperimentConfig
from .core import TravelModel
from .ddgnn import ModelParams, TrainResult, train_demand
from .depgraph import build_forest, build_wdg
from .engine import EngineConfig, Simulator, Strategy
from .grid_demand import TaskSeries
from .search_tvf import Experience, SearchContext, TVFTrainResult, ValueParams, dfsearch, train_tvf
from .seqplan import build_catalogs
from .stream import EventStream
from .workload import (WorkloadConfig, history_series, occupancy_series, random_instance,
                       synth_workload)

log = logging.getLogger(__name__)

WALL_FIELDS = ("plan_wall_total", "plan_wall_mean", "plan_wall_max", "run_wall", "plan_walls")


class ExperimentError(RuntimeError):
    def __init__(self, strategy: str, event_index: int, cause: BaseException):
        super().__init__(f"{strategy}: failed at event {event_index}: {cause}")
        self.strategy = strategy
        self.event_index = event_index


@dataclass
class Models:
    demand: ModelParams | None = None
    tvf: ValueParams | None = None


@dataclass
class RunReport:
    strategy: str
    seed: int
    assigned: int
    n_tasks: int
    n_workers: int
    plan_events: int
    expansions: int
    evaluations: int
    predicted_dispatched: int
    plan_walls: list[float] = field(default_factory=list)
    run_wall: float = 0.0
    axes: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.assigned > self.n_tasks:
            raise ValueError("assigned count exceeds the number of tasks")

    @property
    def plan_wall_total(self) -> float:
        return float(sum(self.plan_walls))

    @property
    def plan_wall_mean(self) -> float:
        return self.plan_wall_total / len(self.plan_walls) if self.plan_walls else 0.0

    @property
    def plan_wall_max(self) -> float:
        return max(self.plan_walls, default=0.0)

    def row(self) -> dict:
        """Flat CSV row: scalar fields, axis values, and wall-time summaries."""
        out = {
            "strategy": self.strategy, "seed": self.seed, "assigned": self.assigned,
            "n_tasks": self.n_tasks, "n_workers": self.n_workers,
            "plan_events": self.plan_events, "expansions": self.expansions,
            "evaluations": self.evaluations, "predicted_dispatched": self.predicted_dispatched,
        }
        for k in AXES:
            out.setdefault(k, self.axes.get(k, ""))
        out.update(plan_wall_total=self.plan_wall_total, plan_wall_mean=self.plan_wall_mean,
                   plan_wall_max=self.plan_wall_max, run_wall=self.run_wall)
        return out

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunReport":
        return cls(**d)

    def without_wall(self) -> dict:
        d = self.to_dict()
        for k in WALL_FIELDS:
            d.pop(k, None)
        return d


# the swept parameter axes of the evaluation
AXES = ("n_tasks", "n_workers", "reach", "availability", "task_valid")


def workload_axes(w: WorkloadConfig) -> dict:
    return {"n_tasks": w.n_tasks, "n_workers": w.n_workers, "reach": w.reach[1],
            "availability": w.availability, "task_valid": w.task_valid}


def run_experiment(strategy: Strategy | str, stream: EventStream, cfg: EngineConfig,
                   models: Models = Models(), seed: int = 0, config_echo: dict | None = None,
                   axes: dict | None = None) -> RunReport:
    if isinstance(strategy, str):
        strategy = Strategy.parse(strategy)
    tic = time.perf_counter()
    sim = Simulator(strategy, cfg, models.demand, models.tvf)
    try:
        res = sim.run(stream)
    except Exception as exc:
        raise ExperimentError(strategy.value, sim.events_seen, exc) from exc
    wall = time.perf_counter() - tic
    return RunReport(strategy.value, int(seed), res.assignment.count(), len(stream.tasks),
                     len(stream.workers), res.stats.plans, res.stats.expansions,
                     res.stats.evaluations, res.dispatched_predicted, list(res.stats.wall),
                     wall, dict(axes or {}), dict(config_echo or {}))


def run_batch(exp: ExperimentConfig, strategies: Sequence[str], seeds: Iterable[int],
              models: Models = Models()) -> list[RunReport]:
    """Every strategy on the seeded stream of every seed, ordered by (strategy, seed)."""
    seeds = list(seeds)
    streams = {}
    for s in seeds:
        streams[s] = synth_workload(exp.with_seed(s).workload)
    out = []
    for name in strategies:
        for s in seeds:
            e = exp.with_seed(s)
            out.append(run_experiment(name, streams[s], e.engine, models, s, e.to_dict(),
                                      workload_axes(e.workload)))
    return out


# ---------------------------------------------------------------- training pipelines

def train_demand_model(exp: ExperimentConfig, seed: int = 0,
                       history: Sequence[EventStream] | None = None,
                       validation: Sequence[EventStream] | None = None) -> TrainResult:
    """Fit the demand model on seeded synthetic history or on given streams."""
    w = exp.workload
    d = exp.raw["demand"]
    if history:
        tr = _concat([occupancy_series(s.tasks, w) for s in history])
        va = _concat([occupancy_series(s.tasks, w) for s in (validation or history)])
    else:
        tr = history_series(w, d["history_seeds"])
        va = history_series(w, d["val_seeds"])
    return train_demand(tr, va, exp.demand, exp.demand_hyper(seed))


def _concat(parts):
    first = parts[0]
    return TaskSeries(np.concatenate([p.data for p in parts], axis=1), first.t0, first.dt, first.k)


def collect_stream_experience(exp: ExperimentConfig, demand: ModelParams | None,
                              seeds: Iterable[int] | None = None,
                              streams: Sequence[EventStream] | None = None,
                              experience: Experience | None = None) -> Experience:
    """Replay streams under exact adaptive planning and record every action value."""
    ex = experience if experience is not None else Experience()
    strategy = Strategy.DTA_TP if demand is not None else Strategy.DTA
    if streams is None:
        seeds = exp.raw["tvf"]["experience_seeds"] if seeds is None else seeds
        streams = [synth_workload(exp.with_seed(s).workload) for s in seeds]
    for st in streams:
        Simulator(strategy, exp.engine, demand, experience=ex).run(st)
    return ex


def collect_instance_experience(n_instances: int, seed: int = 0, n_workers: int = 4,
                                n_tasks: int = 8, max_len: int = 4,
                                experience: Experience | None = None) -> Experience:
    """Exhaustive search over random planning snapshots, recording every action value."""
    ex = experience if experience is not None else Experience()
    rng = np.random.default_rng(seed)
    model = TravelModel()
    for _ in range(n_instances):
        workers, tasks = random_instance(rng, n_workers, n_tasks)
        cats = build_catalogs(workers, tasks, 0.0, model, max_len)
        forest = build_forest(build_wdg([w.id for w in workers], cats))
        ctx = SearchContext(tasks, cats, 0.0, model)
        for root in forest.roots:
            dfsearch(root, frozenset(tasks), None, ctx, ex)
    return ex


def train_value_function(exp: ExperimentConfig, experience: Experience,
                         seed: int = 0) -> TVFTrainResult:
    return train_tvf(experience, exp.tvf_hyper(seed))


def prepare_models(exp: ExperimentConfig, strategies: Sequence[str], seed: int = 0,
                   models: Models | None = None) -> Models:
    """Train whatever the requested strategies need and was not supplied."""
    m = Models() if models is None else Models(models.demand, models.tvf)
    need = {Strategy.parse(s) for s in strategies}
    if m.demand is None and need & {Strategy.DTA_TP, Strategy.DATA_WA}:
        log.info("training demand model")
        m.demand = train_demand_model(exp, seed).params
    if m.tvf is None and Strategy.DATA_WA in need:
        log.info("collecting experience and training the value function")
        ex = collect_stream_experience(exp, m.demand)
        m.tvf = train_value_function(exp, ex, seed).params
    return m


def save_reports(reports: Sequence[RunReport], path: str | Path) -> None:
    Path(path).write_text(json.dumps([r.to_dict() for r in reports], indent=2, sort_keys=True))


class ReportFormatError(ValueError):
    pass


def load_reports(path: str | Path) -> list[RunReport]:
    """Read one report or a list of them; a directory means its ``summary.json``."""
    p = Path(path)
    if p.is_dir():
        p = p / "summary.json"
    try:
        data = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ReportFormatError(f"{p}: {exc}") from None
    if isinstance(data, dict):
        data = [data]
    try:
        return [RunReport.from_dict(d) for d in data]
    except (TypeError, ValueError) as exc:
        raise ReportFormatError(f"{p}: not a run report ({exc})") from None
