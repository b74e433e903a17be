"""Reachable task sets and maximal valid task sequences per worker."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .core import Task, TravelModel, Worker, distance, travel_time

DEFAULT_MAX_LEN = 4


@dataclass(frozen=True)
class PlannedSequence:
    """A valid ordering of a task subset with its arrival times."""

    tasks: tuple[int, ...]
    arrival: tuple[float, ...]
    distance: float = 0.0

    def __len__(self) -> int:
        return len(self.tasks)

    @property
    def completion(self) -> float | None:
        return self.arrival[-1] if self.arrival else None

    @property
    def task_set(self) -> frozenset[int]:
        return frozenset(self.tasks)


EMPTY = PlannedSequence((), ())


@dataclass
class WorkerCatalog:
    worker: Worker
    reachable: frozenset[int]
    sequences: list[PlannedSequence] = field(default_factory=list)

    def usable(self, remaining: frozenset[int] | set[int]) -> list[PlannedSequence]:
        """Sequences whose tasks are all still open (the empty one included)."""
        return [q for q in self.sequences if remaining.issuperset(q.tasks)]


SequenceCatalog = dict[int, WorkerCatalog]


def reachable_tasks(worker: Worker, tasks: Iterable[Task], t_now: float,
                    model: TravelModel) -> frozenset[int]:
    """Tasks the worker could reach directly in time, before going offline, within reach."""
    window = worker.off_time - t_now
    out = []
    for s in tasks:
        d = distance(worker.loc, s.loc)
        c = d / model.speed
        if c <= s.exp_time - t_now and c <= window and d <= worker.reach:
            out.append(s.id)
    return frozenset(out)


def maximal_valid_sequences(worker: Worker, rs: Iterable[int], tasks: Mapping[int, Task],
                            t_now: float, model: TravelModel,
                            max_len: int = DEFAULT_MAX_LEN) -> list[PlannedSequence]:
    """Fastest valid ordering of every task subset (up to ``max_len``) that has one.

    Dynamic programming over ``(subset, last task)`` keeps, for each state,
    the ordering that reaches the last task earliest; any valid ordering of
    a subset can be rebuilt from such states because arriving earlier never
    hurts later legs. Equal times prefer the lexicographically smaller id
    sequence. Output is sorted by length, then ids, and starts with the
    empty sequence.
    """
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    ids = sorted(rs)
    cand = [tasks[i] for i in ids
            if distance(worker.loc, tasks[i].loc) < worker.reach]
    off = worker.off_time

    # state -> (arrival at last, id sequence, travelled distance)
    layer: dict[tuple[frozenset[int], int], tuple[float, tuple[int, ...], float]] = {}
    for s in cand:
        d = distance(worker.loc, s.loc)
        t = t_now + d / model.speed
        if t < s.exp_time and t < off:
            layer[(frozenset((s.id,)), s.id)] = (t, (s.id,), d)

    best: dict[frozenset[int], tuple[float, tuple[int, ...], float]] = {}

    def keep(store, key, val) -> None:
        cur = store.get(key)
        if cur is None or (val[0], val[1]) < (cur[0], cur[1]):
            store[key] = val

    for length in range(1, max_len + 1):
        for (subset, _), val in layer.items():
            keep(best, subset, val)
        if length == max_len:
            break
        nxt: dict = {}
        for (subset, last), (t, seq, dist) in layer.items():
            here = tasks[last].loc
            for s in cand:
                if s.id in subset:
                    continue
                d = distance(here, s.loc)
                t2 = t + d / model.speed
                if t2 < s.exp_time and t2 < off:
                    keep(nxt, (subset | {s.id}, s.id), (t2, seq + (s.id,), dist + d))
        layer = nxt
        if not layer:
            break

    out = [EMPTY]
    for _, seq, dist in sorted(best.values(), key=lambda v: (len(v[1]), v[1])):
        out.append(PlannedSequence(seq, _arrivals(worker, seq, tasks, t_now, model), dist))
    return out


def _arrivals(worker: Worker, seq: tuple[int, ...], tasks: Mapping[int, Task],
              t_now: float, model: TravelModel) -> tuple[float, ...]:
    t, here, out = t_now, worker.loc, []
    for i in seq:
        t = t + travel_time(here, tasks[i].loc, model)
        out.append(t)
        here = tasks[i].loc
    return tuple(out)


def build_catalogs(workers: Iterable[Worker], tasks: Mapping[int, Task], t_now: float,
                   model: TravelModel, max_len: int = DEFAULT_MAX_LEN,
                   free_at: Mapping[int, float] | None = None) -> SequenceCatalog:
    """Catalogs of every worker; ``free_at`` gives a later start time for busy workers."""
    task_list = list(tasks.values())
    out: SequenceCatalog = {}
    for w in sorted(workers, key=lambda w: w.id):
        t0 = max(t_now, free_at.get(w.id, t_now)) if free_at else t_now
        rs = reachable_tasks(w, task_list, t0, model)
        out[w.id] = WorkerCatalog(w, rs, maximal_valid_sequences(w, rs, tasks, t0, model, max_len))
    return out
