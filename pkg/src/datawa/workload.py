"""Seeded synthetic workloads with lag-coupled demand hotspots."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace

import numpy as np

from .core import Location, Task, Worker
from .grid_demand import GridSpec, TaskSeries, build_grid
from .stream import EventStream


@dataclass(frozen=True)
class HotspotPair:
    """``source`` fires in random windows; ``target`` repeats its slot pattern one window later.

    With ``recurring`` the slot pattern is drawn once and reused by every
    firing, so a cell's own recent history predicts its next window.
    ``n_slots > 0`` fires exactly that many slots instead of ``slot_prob``.
    """

    source: int
    target: int
    fire_prob: float = 0.5
    slot_prob: float = 0.5
    weight: float = 1.0
    recurring: bool = False
    n_slots: int = 0


@dataclass(frozen=True)
class WorkloadConfig:
    n_workers: int = 50
    n_tasks: int = 500
    bbox: tuple[float, float, float, float] = (0.0, 0.0, 4.0, 4.0)
    rows: int = 4
    cols: int = 4
    t_start: float = 0.0
    duration: float = 1800.0
    dt: float = 5.0
    k: int = 12
    reach: tuple[float, float] = (1.0, 1.0)
    availability: float = 3600.0
    task_valid: float = 40.0
    worker_arrival_span: float = 1.0
    background: float = 0.001
    # std (km) of hotspot task positions around the cell centre; None = uniform in cell
    hotspot_spread: float | None = 0.15
    hotspots: tuple[HotspotPair, ...] = (
        HotspotPair(1, 6, fire_prob=1.0, recurring=True, n_slots=1),
        HotspotPair(11, 16, fire_prob=1.0, recurring=True, n_slots=1),
        HotspotPair(4, 7, fire_prob=1.0, recurring=True, n_slots=1),
    )
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_workers < 0 or self.n_tasks < 0:
            raise ValueError("counts must be non-negative")
        if self.duration <= 0 or self.availability <= 0 or self.task_valid <= 0:
            raise ValueError("durations must be positive")

    @property
    def grid(self) -> GridSpec:
        return build_grid(self.bbox, self.rows, self.cols)

    @property
    def n_slots(self) -> int:
        return int(math.ceil(self.duration / self.dt))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hotspots"] = [asdict(h) for h in self.hotspots]
        d["bbox"] = list(self.bbox)
        d["reach"] = list(self.reach)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "WorkloadConfig":
        d = dict(d)
        if "hotspots" in d:
            d["hotspots"] = tuple(HotspotPair(**h) for h in d["hotspots"])
        if "bbox" in d:
            d["bbox"] = tuple(d["bbox"])
        if "reach" in d:
            r = d["reach"]
            d["reach"] = (float(r), float(r)) if isinstance(r, (int, float)) else tuple(r)
        return cls(**d)


def intensity(cfg: WorkloadConfig, rng: np.random.Generator) -> np.ndarray:
    """Per-(cell, slot) task intensity: uniform background plus hotspot firings."""
    M, n_slots, k = cfg.rows * cfg.cols, cfg.n_slots, cfg.k
    lam = np.full((M, n_slots), cfg.background, dtype=float)
    n_windows = int(math.ceil(n_slots / k))
    for hp in cfg.hotspots:
        fired = rng.random(n_windows) < hp.fire_prob
        if hp.n_slots > 0:
            order = np.argsort(rng.random((n_windows, k)), axis=1)
            patterns = order < min(hp.n_slots, k)
        else:
            patterns = rng.random((n_windows, k)) < hp.slot_prob
        if hp.recurring:
            patterns[:] = patterns[0]
        for n in np.nonzero(fired)[0]:
            for j in np.nonzero(patterns[n])[0]:
                for cell, win in ((hp.source, n), (hp.target, n + 1)):
                    slot = win * k + j
                    if slot < n_slots:
                        lam[cell - 1, slot] += hp.weight
    return lam


def synth_workload(cfg: WorkloadConfig) -> EventStream:
    rng = np.random.default_rng(cfg.seed)
    grid = cfg.grid
    lam = intensity(cfg, rng)
    tasks: list[Task] = []
    total = lam.sum()
    if cfg.n_tasks and total > 0:
        flat = lam.ravel() / total
        picks = np.sort(rng.choice(flat.size, size=cfg.n_tasks, p=flat))
        u = rng.random((cfg.n_tasks, 3))
        jitter = rng.normal(0.0, 1.0, (cfg.n_tasks, 2))
        hot = lam > cfg.background
        raw = []
        for idx, (ux, uy, ut), (jx, jy) in zip(picks, u, jitter):
            cell, slot = divmod(int(idx), cfg.n_slots)
            row, col = divmod(cell, cfg.cols)
            x0 = grid.bbox[0] + col * grid.cell_w
            y0 = grid.bbox[1] + row * grid.cell_h
            if cfg.hotspot_spread is not None and hot[cell, slot]:
                x = min(max(x0 + grid.cell_w / 2 + jx * cfg.hotspot_spread, x0), x0 + grid.cell_w)
                y = min(max(y0 + grid.cell_h / 2 + jy * cfg.hotspot_spread, y0), y0 + grid.cell_h)
            else:
                x, y = x0 + ux * grid.cell_w, y0 + uy * grid.cell_h
            raw.append((cfg.t_start + (slot + ut) * cfg.dt, x, y))
        raw.sort()
        for i, (pub, x, y) in enumerate(raw):
            tasks.append(Task(i + 1, Location(x, y), pub, pub + cfg.task_valid))
    workers: list[Worker] = []
    span = cfg.duration * cfg.worker_arrival_span
    wu = rng.random((cfg.n_workers, 4))
    for i, (ux, uy, ut, ur) in enumerate(wu):
        on = cfg.t_start + ut * span
        reach = cfg.reach[0] + ur * (cfg.reach[1] - cfg.reach[0])
        x = grid.bbox[0] + ux * (grid.bbox[2] - grid.bbox[0])
        y = grid.bbox[1] + uy * (grid.bbox[3] - grid.bbox[1])
        workers.append(Worker(i + 1, Location(x, y), reach, on, on + cfg.availability))
    return EventStream.from_objects(workers, tasks)


def occupancy_series(tasks: list[Task], cfg: WorkloadConfig) -> TaskSeries:
    from .grid_demand import build_series
    P = int(math.ceil(cfg.n_slots / cfg.k))
    return build_series(tasks, cfg.grid, cfg.t_start, cfg.k, cfg.dt, P)


def history_series(cfg: WorkloadConfig, seeds) -> TaskSeries:
    """Occupancy of several seeded workloads laid end to end, for demand training."""
    parts = [occupancy_series(synth_workload(replace(cfg, seed=int(s))).tasks,
                              replace(cfg, seed=int(s))) for s in seeds]
    if not parts:
        raise ValueError("history needs at least one seed")
    first = parts[0]
    return TaskSeries(np.concatenate([q.data for q in parts], axis=1), first.t0, first.dt, first.k)


LAG_PATTERNS = np.array([[1, 0, 1], [0, 1, 1], [1, 1, 0], [0, 0, 1]], dtype=float)


def lag_coupled_series(n_windows: int, phase: int = 0, dt: float = 5.0,
                       patterns: np.ndarray = LAG_PATTERNS) -> TaskSeries:
    """Two cells: cell 1 cycles through ``patterns``; cell 2 repeats cell 1 one window later."""
    period, k = patterns.shape
    data = np.zeros((2, n_windows, k))
    for p in range(n_windows):
        data[0, p] = patterns[(p + phase) % period]
        data[1, p] = patterns[(p + phase - 1) % period]
    return TaskSeries(data, 0.0, dt, k)


def series_to_tasks(series: TaskSeries, grid: GridSpec, valid: float = 40.0) -> list[Task]:
    """One task at the centroid of each occupied (cell, slot), mid-slot."""
    out = []
    tid = 1
    for i in range(series.n_cells):
        for p in range(series.P):
            for j in range(series.k):
                if series.data[i, p, j]:
                    pub = series.t_start(p) + (j + 0.5) * series.dt
                    out.append(Task(tid, grid.centroid(i + 1), pub, pub + valid))
                    tid += 1
    return sorted(out, key=lambda s: (s.pub_time, s.id))


def random_instance(rng: np.random.Generator, n_workers: int, n_tasks: int,
                    extent: float = 1.0, reach: float = 1.0,
                    valid: tuple[float, float] = (30.0, 120.0),
                    t_now: float = 0.0) -> tuple[list[Worker], dict[int, Task]]:
    """A single planning snapshot: everyone present at ``t_now`` in an ``extent`` km square."""
    workers = [Worker(i + 1, Location(*rng.uniform(0.0, extent, 2)), reach, t_now, t_now + 3600.0)
               for i in range(n_workers)]
    tasks = {}
    for j in range(n_tasks):
        loc = Location(*rng.uniform(0.0, extent, 2))
        tasks[j + 1] = Task(j + 1, loc, t_now, t_now + float(rng.uniform(*valid)))
    return workers, tasks
