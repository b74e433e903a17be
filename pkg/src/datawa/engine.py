"""Adaptive assignment loop, task planning assignment, and baseline strategies."""

from __future__ import annotations

import enum
import heapq
import itertools
import logging
import math
import time
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence

import numpy as np

from .core import Assignment, Origin, Task, TaskSequence, TravelModel, Worker
from .ddgnn import MATERIALIZE_THRESHOLD, ModelParams, materialize_predictions, predict_proba
from .depgraph import build_tree, build_wdg, mcs_partition
from .grid_demand import GridSpec
from .search_tvf import Experience, ExactSearch, GuidedSearch, Scorer, SearchContext
from .seqplan import DEFAULT_MAX_LEN, PlannedSequence, build_catalogs
from .stream import EventStream, TaskArrival, WorkerArrival

log = logging.getLogger(__name__)


class ConfigurationError(ValueError):
    pass


class Strategy(enum.Enum):
    GREEDY = "Greedy"
    FTA = "FTA"
    DTA = "DTA"
    DTA_TP = "DTA_TP"
    DATA_WA = "DATA-WA"

    @classmethod
    def parse(cls, name: str) -> "Strategy":
        norm = name.replace("-", "_").replace("+", "_").upper()
        for s in cls:
            if s.name == norm or s.value.upper() == name.upper():
                return s
        raise ConfigurationError(f"unknown strategy {name!r}")


@dataclass(frozen=True)
class EngineConfig:
    model: TravelModel = field(default_factory=TravelModel)
    max_len: int = DEFAULT_MAX_LEN
    grid: GridSpec | None = None
    k: int = 12
    dt: float = 5.0
    threshold: float = MATERIALIZE_THRESHOLD
    task_valid: float = 40.0
    t0: float | None = None
    batch_window: float = 0.0


@dataclass
class PlanningAssignment:
    pairs: list[tuple[int, TaskSequence]]
    created: float

    def as_dict(self) -> dict[int, TaskSequence]:
        return dict(self.pairs)

    def task_count(self) -> int:
        return sum(len(s) for _, s in self.pairs)


@dataclass
class SearchStats:
    expansions: int = 0
    evaluations: int = 0
    plans: int = 0
    wall: list[float] = field(default_factory=list)


def tpa(workers: Iterable[Worker], tasks: Mapping[int, Task], t_now: float,
        tvf: Scorer | None = None, model: TravelModel = TravelModel(),
        max_len: int = DEFAULT_MAX_LEN, stats: SearchStats | None = None,
        experience: Experience | None = None,
        free_at: Mapping[int, float] | None = None) -> PlanningAssignment:
    """Plan task sequences for ``workers`` over ``tasks``.

    Without a scorer each tree is searched exactly (recording action values
    into ``experience`` when given); with one, the guided single-pass search
    is used. Workers listed in ``free_at`` are busy and plan from that time
    at their current location.
    """
    workers = sorted(workers, key=lambda w: w.id)
    cats = build_catalogs(workers, tasks, t_now, model, max_len, free_at)
    active = [w.id for w in workers if cats[w.id].reachable]
    g = build_wdg(active, cats)
    ctx = SearchContext(tasks, cats, t_now, model)
    open_ids = frozenset(tasks)
    pairs: list[tuple[int, PlannedSequence]] = []
    for comp in g.components():
        sub = g.subgraph(comp)
        root = build_tree(sub, mcs_partition(sub))
        if tvf is None:
            search = ExactSearch(ctx, experience, all_workers=False)
            pairs += search.plan(root, open_ids)
            if stats:
                stats.expansions += search.expansions
        else:
            guided = GuidedSearch(ctx, tvf)
            pairs += guided.run(root, open_ids)
            if stats:
                stats.expansions += guided.expansions
                stats.evaluations += guided.evaluations
    out = [(w, TaskSequence(w, q.tasks, q.arrival)) for w, q in sorted(pairs, key=lambda p: p[0])
           if q.tasks]
    return PlanningAssignment(out, t_now)


# ---------------------------------------------------------------- event loop

_COMPLETE, _WINDOW, _ARRIVE = 0, 1, 2


@dataclass
class RunResult:
    assignment: Assignment
    stats: SearchStats
    dispatched_predicted: int = 0
    final_open_tasks: list[Task] = field(default_factory=list)
    final_workers: list[Worker] = field(default_factory=list)
    end_time: float = 0.0


class Simulator:
    """Single-threaded discrete-event loop shared by every strategy.

    Events are stream arrivals, a worker finishing its current leg (it is
    then ready for tasks again, which counts as a worker arrival), and
    forecast window boundaries when a demand model is present.
    """

    def __init__(self, strategy: Strategy, cfg: EngineConfig = EngineConfig(),
                 demand: ModelParams | None = None, tvf: Scorer | None = None,
                 experience: Experience | None = None):
        self.strategy = strategy
        self.experience = experience
        self.cfg = cfg
        self.uses_prediction = strategy in (Strategy.DTA_TP, Strategy.DATA_WA)
        if self.uses_prediction:
            if demand is None:
                raise ConfigurationError(f"{strategy.value} needs a demand model")
            if cfg.grid is None:
                raise ConfigurationError(f"{strategy.value} needs a grid")
            if demand.cfg.n_cells != cfg.grid.n_cells or demand.cfg.k != cfg.k:
                raise ConfigurationError("demand model shape does not match grid/k")
        if strategy is Strategy.DATA_WA and tvf is None:
            log.info("DATA-WA without a value function: falling back to exact search")
        self.demand = demand
        self.tvf = tvf if strategy is Strategy.DATA_WA else None

        self.workers: dict[int, Worker] = {}
        self.busy_until: dict[int, float] = {}
        self.tasks: dict[int, Task] = {}
        self.assignment = Assignment()
        self.stats = SearchStats()
        self.real_seen: list[Task] = []
        self.predicted_by_window: dict[int, list[Task]] = {}
        self.dispatched_predicted = 0
        self._queue: list = []
        self._seq = itertools.count()
        self._next_pred_id = -1
        self.events_seen = 0

    # ---- queue helpers
    def _push(self, t: float, kind: int, payload) -> None:
        heapq.heappush(self._queue, (t, kind, next(self._seq), payload))

    # ---- bookkeeping
    def _purge(self, t_now: float) -> None:
        for tid in [i for i, s in self.tasks.items() if s.exp_time <= t_now]:
            del self.tasks[tid]
        for wid in [i for i, w in self.workers.items()
                    if w.off_time <= t_now and i not in self.busy_until]:
            del self.workers[wid]

    def _idle(self, t_now: float) -> list[Worker]:
        return [w for wid, w in sorted(self.workers.items())
                if wid not in self.busy_until and w.off_time > t_now]

    def _online(self, t_now: float) -> list[Worker]:
        return [w for _, w in sorted(self.workers.items())
                if w.off_time > max(t_now, self.busy_until.get(w.id, t_now))]

    def _occupy(self, w: Worker, seq: Sequence[Task], arrivals: Sequence[float]) -> None:
        for s in seq:
            self.tasks.pop(s.id, None)
        real = [(s, a) for s, a in zip(seq, arrivals) if s.origin is Origin.REAL]
        self.dispatched_predicted += len(seq) - len(real)
        if real:
            self.assignment.add(w.id, TaskSequence(w.id, tuple(s.id for s, _ in real),
                                                   tuple(a for _, a in real)))
        self.workers[w.id] = replace(w, loc=seq[-1].loc)
        done = arrivals[-1]
        if seq[-1].origin is Origin.PREDICTED:
            # hold the worker on site until the forecast slot opens
            done = max(done, seq[-1].pub_time)
        self.busy_until[w.id] = done
        self._push(done, _COMPLETE, w.id)

    # ---- demand forecasting
    def _window_index(self, t: float) -> int:
        span = self.cfg.k * self.cfg.dt
        return math.floor((t - self._t0) / span)

    def _forecast(self, n: int) -> None:
        cfg, grid, model = self.cfg, self.cfg.grid, self.demand
        P, k, dt = model.cfg.P, cfg.k, cfg.dt
        start = self._t0 + n * k * dt
        hist = np.zeros((grid.n_cells, P, k))
        lo = start - P * k * dt
        for s in self.real_seen:
            if lo <= s.pub_time < start:
                slot = math.floor((s.pub_time - lo) / dt)
                if 0 <= slot < P * k:
                    p, j = divmod(slot, k)
                    hist[grid.cell_of(s.loc) - 1, p, j] = 1.0
        probs = predict_proba(hist, model)
        preds = materialize_predictions(probs, cfg.threshold, grid, start, dt,
                                        cfg.task_valid, self._next_pred_id)
        self._next_pred_id -= len(preds)
        self.predicted_by_window[n] = list(preds)
        for s in preds:
            self.tasks[s.id] = s
        self._push(start + k * dt, _WINDOW, n + 1)

    def _consume_prediction(self, real: Task) -> None:
        n = self._window_index(real.pub_time)
        cell = self.cfg.grid.cell_of(real.loc)
        pool = [p for p in self.predicted_by_window.get(n, [])
                if self.cfg.grid.cell_of(p.loc) == cell]
        if not pool:
            return
        match = min(pool, key=lambda p: (abs(p.pub_time - real.pub_time), p.pub_time))
        self.predicted_by_window[n].remove(match)
        self.tasks.pop(match.id, None)

    # ---- planning/dispatch
    def _plan_and_dispatch(self, t_now: float) -> None:
        idle = self._idle(t_now)
        if not idle:
            return
        if self.strategy is Strategy.GREEDY:
            self._greedy(idle, t_now)
            return
        real_only = self.strategy in (Strategy.FTA, Strategy.DTA)
        pool = {i: s for i, s in self.tasks.items()
                if not (real_only and s.origin is Origin.PREDICTED)}
        if not pool:
            return
        # adaptive strategies plan over every online worker, busy ones from
        # their destination once free; only idle workers act on the plan
        planners = idle if self.strategy is Strategy.FTA else self._online(t_now)
        free_at = {w.id: self.busy_until[w.id] for w in planners if w.id in self.busy_until}
        tic = time.perf_counter()
        pa = tpa(planners, pool, t_now, self.tvf, self.cfg.model, self.cfg.max_len, self.stats,
                 self.experience, free_at)
        self.stats.wall.append(time.perf_counter() - tic)
        self.stats.plans += 1
        idle_ids = {w.id for w in idle}
        for wid, seq in pa.pairs:
            if wid not in idle_ids:
                continue
            w = self.workers[wid]
            tasks = [pool[i] for i in seq.tasks]
            if self.strategy is Strategy.FTA:
                self._occupy(w, tasks, seq.arrival)
            else:
                self._occupy(w, tasks[:1], seq.arrival[:1])

    def _greedy(self, idle: list[Worker], t_now: float) -> None:
        tic = time.perf_counter()
        for w in idle:
            pool = {i: s for i, s in self.tasks.items() if s.origin is Origin.REAL}
            if not pool:
                break
            cats = build_catalogs([w], pool, t_now, self.cfg.model, self.cfg.max_len)
            seqs = cats[w.id].sequences
            best = min(seqs, key=lambda q: (-len(q), q.completion or 0.0, q.tasks))
            if best.tasks:
                self._occupy(w, [pool[i] for i in best.tasks], best.arrival)
        self.stats.wall.append(time.perf_counter() - tic)
        self.stats.plans += 1

    # ---- main loop
    def run(self, stream: EventStream) -> RunResult:
        events = stream.events
        self._t0 = self.cfg.t0 if self.cfg.t0 is not None else (events[0].t if events else 0.0)
        for ev in events:
            self._push(ev.t, _ARRIVE, ev)
        if self.uses_prediction and events:
            self._push(self._t0, _WINDOW, 0)
        t_now = self._t0
        last_event_t = events[-1].t if events else self._t0
        while self._queue:
            t_now, kind, _, payload = heapq.heappop(self._queue)
            if kind == _WINDOW and t_now > last_event_t:
                continue
            self._purge(t_now)
            if kind == _COMPLETE:
                self.busy_until.pop(payload, None)
            elif kind == _WINDOW:
                self._forecast(payload)
                continue
            else:
                self.events_seen += 1
                self._ingest(payload)
            if self.cfg.batch_window > 0 and self._queue and \
                    self._queue[0][0] - t_now < self.cfg.batch_window and self._queue[0][1] != _WINDOW:
                continue
            self._plan_and_dispatch(t_now)
            self._purge(t_now)
        end = max(t_now, last_event_t)
        self._purge(end)
        return RunResult(self.assignment, self.stats, self.dispatched_predicted,
                         sorted(self.tasks.values(), key=lambda s: s.id),
                         sorted(self.workers.values(), key=lambda w: w.id), end)

    def _ingest(self, ev) -> None:
        if isinstance(ev, WorkerArrival):
            self.workers[ev.worker.id] = ev.worker
        elif isinstance(ev, TaskArrival):
            s = ev.task
            self.tasks[s.id] = s
            self.real_seen.append(s)
            if self.uses_prediction:
                self._consume_prediction(s)
        else:
            raise TypeError(f"unknown event {ev!r}")


def adaptive_assign(stream: EventStream, cfg: EngineConfig = EngineConfig(),
                    demand: ModelParams | None = None, tvf: Scorer | None = None) -> Assignment:
    """Re-plan on every arrival and dispatch only the head of each plan.

    With a demand model, forecast tasks join the open set; with a value
    function, the guided search replaces the exact one.
    """
    strategy = Strategy.DATA_WA if demand is not None else Strategy.DTA
    sim = Simulator(strategy, cfg, demand, tvf)
    if demand is None and tvf is not None:
        sim.tvf = tvf
    return sim.run(stream).assignment


def baseline_assign(strategy: Strategy | str, stream: EventStream,
                    cfg: EngineConfig = EngineConfig(), demand: ModelParams | None = None,
                    tvf: Scorer | None = None) -> Assignment:
    if isinstance(strategy, str):
        strategy = Strategy.parse(strategy)
    return Simulator(strategy, cfg, demand, tvf).run(stream).assignment
