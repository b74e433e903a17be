"""Event streams of arriving workers and tasks, and their CSV form.

CSV header: ``kind,id,t,x,y,extra1,extra2``. Worker rows carry the reach
(km) in ``extra1`` and the off time in ``extra2``; task rows carry the
expiration time in ``extra1`` and leave ``extra2`` empty.
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Union

from .core import Location, Task, Worker

log = logging.getLogger(__name__)

HEADER = ["kind", "id", "t", "x", "y", "extra1", "extra2"]


class IngestionError(ValueError):
    def __init__(self, line: int, msg: str):
        super().__init__(f"line {line}: {msg}")
        self.line = line


@dataclass(frozen=True)
class WorkerArrival:
    worker: Worker

    @property
    def t(self) -> float:
        return self.worker.on_time


@dataclass(frozen=True)
class TaskArrival:
    task: Task

    @property
    def t(self) -> float:
        return self.task.pub_time


Event = Union[WorkerArrival, TaskArrival]


@dataclass
class EventStream:
    events: list[Event] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.events)

    def __iter__(self):
        return iter(self.events)

    @property
    def workers(self) -> list[Worker]:
        return [e.worker for e in self.events if isinstance(e, WorkerArrival)]

    @property
    def tasks(self) -> list[Task]:
        return [e.task for e in self.events if isinstance(e, TaskArrival)]

    @classmethod
    def from_objects(cls, workers: Iterable[Worker] = (), tasks: Iterable[Task] = ()) -> "EventStream":
        """Merge workers and tasks into time order; at equal times workers come first."""
        evs: list[Event] = [WorkerArrival(w) for w in workers] + [TaskArrival(s) for s in tasks]
        evs.sort(key=lambda e: (e.t, 0 if isinstance(e, WorkerArrival) else 1))
        return cls(evs)

    def validate(self) -> None:
        seen_w, seen_t = set(), set()
        prev = float("-inf")
        for i, e in enumerate(self.events):
            if e.t < prev:
                raise ValueError(f"event {i} out of time order")
            prev = e.t
            ids, oid = (seen_w, e.worker.id) if isinstance(e, WorkerArrival) else (seen_t, e.task.id)
            if oid in ids:
                raise ValueError(f"event {i}: duplicate id {oid}")
            ids.add(oid)

    def to_csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(HEADER)
        for e in self.events:
            if isinstance(e, WorkerArrival):
                o = e.worker
                w.writerow(["worker", o.id, repr(float(o.on_time)), repr(float(o.loc.x)), repr(float(o.loc.y)),
                            repr(float(o.reach)), repr(float(o.off_time))])
            else:
                s = e.task
                w.writerow(["task", s.id, repr(float(s.pub_time)), repr(float(s.loc.x)), repr(float(s.loc.y)),
                            repr(float(s.exp_time)), ""])
        return buf.getvalue()

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.to_csv_text())


def parse_stream(text: str) -> EventStream:
    reader = csv.reader(io.StringIO(text))
    rows = list(reader)
    if not rows:
        return EventStream()
    if [c.strip() for c in rows[0]] != HEADER:
        raise IngestionError(1, f"expected header {','.join(HEADER)}")
    events: list[Event] = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(HEADER):
            raise IngestionError(lineno, f"expected {len(HEADER)} fields, got {len(row)}")
        kind = row[0].strip().lower()
        try:
            oid = int(row[1])
            t, x, y = float(row[2]), float(row[3]), float(row[4])
            if kind == "worker":
                events.append(WorkerArrival(Worker(oid, Location(x, y), float(row[5]), t, float(row[6]))))
            elif kind == "task":
                events.append(TaskArrival(Task(oid, Location(x, y), t, float(row[5]))))
            else:
                raise IngestionError(lineno, f"unknown kind {row[0]!r}")
        except IngestionError:
            raise
        except ValueError as exc:
            raise IngestionError(lineno, str(exc)) from None
    if any(b.t < a.t for a, b in zip(events, events[1:])):
        log.warning("stream rows not in time order; sorting")
        events.sort(key=lambda e: e.t)
    return EventStream(events)


def load_stream(path: str | Path) -> EventStream:
    return parse_stream(Path(path).read_text())
