"""Domain entities, travel model and sequence validity shared by every stage."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence


class GeometryError(ValueError):
    """Raised for non-finite coordinates."""


class Origin(enum.Enum):
    REAL = "Real"
    PREDICTED = "Predicted"


@dataclass(frozen=True)
class Location:
    x: float
    y: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise GeometryError(f"non-finite location ({self.x}, {self.y})")


@dataclass(frozen=True)
class Task:
    id: int
    loc: Location
    pub_time: float
    exp_time: float
    origin: Origin = Origin.REAL

    def __post_init__(self) -> None:
        if not self.exp_time > self.pub_time:
            raise ValueError(f"task {self.id}: exp_time must exceed pub_time")

    @property
    def is_predicted(self) -> bool:
        return self.origin is Origin.PREDICTED


@dataclass(frozen=True)
class Worker:
    id: int
    loc: Location
    reach: float
    on_time: float
    off_time: float

    def __post_init__(self) -> None:
        if not self.off_time > self.on_time:
            raise ValueError(f"worker {self.id}: off_time must exceed on_time")
        if not self.reach > 0:
            raise ValueError(f"worker {self.id}: reach must be positive")

    def availability(self, t_now: float) -> float:
        """Remaining availability window ``off_time - t_now`` (clamped at 0)."""
        return max(0.0, self.off_time - t_now)


@dataclass(frozen=True)
class TravelModel:
    """Planar Euclidean travel at constant speed (km per second)."""

    speed: float = 40.0 / 3600.0

    def __post_init__(self) -> None:
        if not self.speed > 0:
            raise ValueError("speed must be positive")


@dataclass(frozen=True)
class TaskSequence:
    worker_id: int
    tasks: tuple[int, ...]
    arrival: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.tasks) != len(self.arrival):
            raise ValueError("arrival length must equal tasks length")
        if len(set(self.tasks)) != len(self.tasks):
            raise ValueError("duplicate task ids in sequence")

    def __len__(self) -> int:
        return len(self.tasks)

    @property
    def completion(self) -> float | None:
        return self.arrival[-1] if self.arrival else None


@dataclass
class Assignment:
    """Executed ``(worker_id, TaskSequence)`` pairs in single-task mode."""

    pairs: list[tuple[int, TaskSequence]] = field(default_factory=list)

    def add(self, worker_id: int, seq: TaskSequence) -> None:
        seen = self.task_ids()
        dup = seen.intersection(seq.tasks)
        if dup:
            raise ValueError(f"tasks {sorted(dup)} already assigned")
        self.pairs.append((worker_id, seq))

    def task_ids(self) -> set[int]:
        return {t for _, seq in self.pairs for t in seq.tasks}

    def count(self) -> int:
        return sum(len(seq) for _, seq in self.pairs)

    def by_worker(self) -> dict[int, list[int]]:
        out: dict[int, list[int]] = {}
        for wid, seq in self.pairs:
            out.setdefault(wid, []).extend(seq.tasks)
        return out


def distance(a: Location, b: Location) -> float:
    return math.hypot(a.x - b.x, a.y - b.y)


def travel_metrics(a: Location, b: Location, model: TravelModel) -> tuple[float, float]:
    """Return ``(distance_km, time_s)`` between two locations."""
    for p in (a, b):
        if not (math.isfinite(p.x) and math.isfinite(p.y)):
            raise GeometryError(f"non-finite location ({p.x}, {p.y})")
    d = distance(a, b)
    return d, d / model.speed


def travel_time(a: Location, b: Location, model: TravelModel) -> float:
    return distance(a, b) / model.speed


def arrival_times(worker: Worker, seq: Sequence[Task], t_now: float,
                  model: TravelModel) -> list[float]:
    """Arrival time at each task when ``worker`` leaves ``worker.loc`` at ``t_now``."""
    out: list[float] = []
    t = t_now
    here = worker.loc
    for task in seq:
        t = t + travel_time(here, task.loc, model)
        out.append(t)
        here = task.loc
    return out


class ViolationKind(enum.Enum):
    EXPIRED = "Expired"
    OFFLINE = "Offline"
    UNREACHABLE = "Unreachable"


@dataclass(frozen=True)
class Violation:
    kind: ViolationKind
    task_id: int

    def __bool__(self) -> bool:
        return False


class _Valid:
    def __bool__(self) -> bool:
        return True

    def __repr__(self) -> str:
        return "Valid"


Valid = _Valid()


def validate_sequence(worker: Worker, seq: Sequence[Task], t_now: float,
                      model: TravelModel) -> _Valid | Violation:
    """Check the three validity constraints task by task, in sequence order.

    For each task the deadline is checked first, then the worker's off time,
    then the reach (distance from the worker's current location). All
    comparisons are strict. The returned object is truthy only when valid.
    """
    for task, t in zip(seq, arrival_times(worker, seq, t_now, model)):
        if not t < task.exp_time:
            return Violation(ViolationKind.EXPIRED, task.id)
        if not t < worker.off_time:
            return Violation(ViolationKind.OFFLINE, task.id)
        if not distance(worker.loc, task.loc) < worker.reach:
            return Violation(ViolationKind.UNREACHABLE, task.id)
    return Valid


def make_sequence(worker: Worker, seq: Sequence[Task], t_now: float,
                  model: TravelModel) -> TaskSequence:
    return TaskSequence(worker.id, tuple(t.id for t in seq),
                        tuple(arrival_times(worker, seq, t_now, model)))


def index_tasks(tasks: Iterable[Task]) -> dict[int, Task]:
    return {t.id: t for t in tasks}
