import math

import pytest
from hypothesis import given, strategies as st

from datawa.core import (Assignment, GeometryError, Location, Task, TaskSequence, TravelModel,
                         ViolationKind, Worker, arrival_times, distance, make_sequence,
                         travel_metrics, validate_sequence)

UNIT = TravelModel(1.0)  # one km per second keeps the arithmetic readable


def test_location_coerces_numpy_scalars_to_float():
    import numpy as np
    p = Location(np.float64(1.5), np.int64(2))
    assert type(p.x) is float and type(p.y) is float
    assert repr(p.x) == "1.5"


@pytest.mark.parametrize("x,y", [(math.nan, 0.0), (0.0, math.inf)])
def test_non_finite_location_rejected(x, y):
    with pytest.raises(GeometryError):
        Location(x, y)


def test_default_speed_is_forty_kmh():
    d, t = travel_metrics(Location(0, 0), Location(0, 1), TravelModel())
    assert d == 1.0
    assert t == pytest.approx(90.0)


def test_task_and_worker_windows_checked():
    with pytest.raises(ValueError):
        Task(1, Location(0, 0), 5.0, 5.0)
    with pytest.raises(ValueError):
        Worker(1, Location(0, 0), 1.0, 3.0, 2.0)
    with pytest.raises(ValueError):
        Worker(1, Location(0, 0), 0.0, 0.0, 2.0)


def test_arrivals_accumulate_along_the_route():
    w = Worker(1, Location(0, 0), 10.0, 0.0, 100.0)
    seq = [Task(1, Location(3, 4), 0, 50), Task(2, Location(3, 0), 0, 50)]
    assert arrival_times(w, seq, 2.0, UNIT) == [7.0, 11.0]
    ts = make_sequence(w, seq, 2.0, UNIT)
    assert ts.tasks == (1, 2) and ts.completion == 11.0


def test_deadline_is_strict():
    w = Worker(1, Location(0, 0), 10.0, 0.0, 100.0)
    on_time = Task(1, Location(2, 0), 0.0, 2.0 + 1e-9)
    exact = Task(2, Location(2, 0), 0.0, 2.0)
    assert validate_sequence(w, [on_time], 0.0, UNIT)
    v = validate_sequence(w, [exact], 0.0, UNIT)
    assert not v and v.kind is ViolationKind.EXPIRED and v.task_id == 2


def test_off_time_and_reach_are_strict():
    w = Worker(1, Location(0, 0), 2.0, 0.0, 2.0)
    v = validate_sequence(w, [Task(1, Location(2, 0), 0.0, 9.0)], 0.0, UNIT)
    assert v.kind is ViolationKind.OFFLINE
    w2 = Worker(2, Location(0, 0), 2.0, 0.0, 50.0)
    v = validate_sequence(w2, [Task(1, Location(2, 0), 0.0, 9.0)], 0.0, UNIT)
    assert v.kind is ViolationKind.UNREACHABLE


def test_reach_is_measured_from_the_worker_start():
    # second task is 1 from the first but 3 from home: out of reach
    w = Worker(1, Location(0, 0), 2.5, 0.0, 50.0)
    seq = [Task(1, Location(2, 0), 0, 50), Task(2, Location(3, 0), 0, 50)]
    v = validate_sequence(w, seq, 0.0, UNIT)
    assert v.kind is ViolationKind.UNREACHABLE and v.task_id == 2


def test_violation_reports_first_failing_task_in_order():
    w = Worker(1, Location(0, 0), 10.0, 0.0, 100.0)
    seq = [Task(1, Location(1, 0), 0, 0.5), Task(2, Location(2, 0), 0, 0.1)]
    assert validate_sequence(w, seq, 0.0, UNIT).task_id == 1


def test_empty_sequence_is_valid():
    w = Worker(1, Location(0, 0), 1.0, 0.0, 1.0)
    assert validate_sequence(w, [], 0.0, UNIT)


def test_assignment_refuses_reassigning_a_task():
    a = Assignment()
    a.add(1, TaskSequence(1, (3, 4), (1.0, 2.0)))
    with pytest.raises(ValueError):
        a.add(2, TaskSequence(2, (4,), (1.0,)))
    assert a.count() == 2 and a.by_worker() == {1: [3, 4]}


def test_task_sequence_rejects_duplicates():
    with pytest.raises(ValueError):
        TaskSequence(1, (2, 2), (1.0, 2.0))


coords = st.floats(-50, 50, allow_nan=False)


@given(coords, coords, coords, coords)
def test_distance_is_symmetric_and_matches_hypot(ax, ay, bx, by):
    a, b = Location(ax, ay), Location(bx, by)
    assert distance(a, b) == distance(b, a) == math.hypot(ax - bx, ay - by)


@given(st.lists(st.tuples(coords, coords), min_size=1, max_size=5))
def test_arrivals_are_non_decreasing(points):
    w = Worker(1, Location(0, 0), 1e3, 0.0, 1e6)
    seq = [Task(i + 1, Location(x, y), 0.0, 1e6) for i, (x, y) in enumerate(points)]
    times = arrival_times(w, seq, 0.0, UNIT)
    assert all(b >= a for a, b in zip(times, times[1:]))
