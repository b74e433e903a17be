import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from datawa.core import Location, Task, TravelModel, Worker, validate_sequence
from datawa.seqplan import (EMPTY, build_catalogs, maximal_valid_sequences, reachable_tasks)
from datawa.workload import random_instance

from oracles import feasible_sets, min_completion

UNIT = TravelModel(1.0)


def test_reachable_set_uses_inclusive_bounds():
    w = Worker(1, Location(0, 0), 2.0, 0.0, 2.0)
    tasks = [Task(1, Location(2, 0), 0.0, 2.0),   # every bound met with equality
             Task(2, Location(2.001, 0), 0.0, 9.0),
             Task(3, Location(1, 0), 0.0, 0.999)]
    assert reachable_tasks(w, tasks, 0.0, UNIT) == frozenset({1})


def test_boundary_task_is_reachable_but_has_no_valid_sequence():
    w = Worker(1, Location(0, 0), 2.0, 0.0, 50.0)
    tasks = {1: Task(1, Location(2, 0), 0.0, 9.0)}
    assert reachable_tasks(w, tasks.values(), 0.0, UNIT) == {1}
    assert maximal_valid_sequences(w, {1}, tasks, 0.0, UNIT) == [EMPTY]


def test_catalog_starts_with_empty_and_orders_by_length_then_ids():
    w = Worker(1, Location(0, 0), 5.0, 0.0, 100.0)
    tasks = {i: Task(i, Location(i, 0), 0.0, 100.0) for i in (1, 2, 3)}
    seqs = maximal_valid_sequences(w, tasks, tasks, 0.0, UNIT)
    assert seqs[0] == EMPTY
    keys = [(len(q), sorted(q.tasks)) for q in seqs]
    assert keys == sorted(keys)
    assert len(seqs) == 8
    full = seqs[-1]
    assert full.tasks == (1, 2, 3) and full.completion == 3.0 and full.distance == 3.0


def test_max_len_caps_sequences():
    w = Worker(1, Location(0, 0), 5.0, 0.0, 100.0)
    tasks = {i: Task(i, Location(i * 0.1, 0), 0.0, 100.0) for i in range(1, 6)}
    seqs = maximal_valid_sequences(w, tasks, tasks, 0.0, UNIT, max_len=2)
    assert max(len(q) for q in seqs) == 2
    assert len(seqs) == 1 + 5 + 10
    with pytest.raises(ValueError):
        maximal_valid_sequences(w, tasks, tasks, 0.0, UNIT, max_len=0)


def test_fastest_ordering_wins_over_id_order():
    w = Worker(1, Location(0, 0), 5.0, 0.0, 100.0)
    tasks = {1: Task(1, Location(2, 0), 0, 100), 2: Task(2, Location(1, 0), 0, 100)}
    seqs = maximal_valid_sequences(w, tasks, tasks, 0.0, UNIT)
    assert seqs[-1].tasks == (2, 1)


def test_busy_worker_plans_from_its_free_time():
    w = Worker(1, Location(0, 0), 5.0, 0.0, 100.0)
    tasks = {1: Task(1, Location(1, 0), 0, 5.0)}
    now = build_catalogs([w], tasks, 0.0, UNIT)
    later = build_catalogs([w], tasks, 0.0, UNIT, free_at={1: 4.5})
    assert now[1].sequences[-1].arrival == (1.0,)
    assert later[1].reachable == frozenset()
    assert later[1].sequences == [EMPTY]


def _check_against_permutations(worker, tasks, max_len=4):
    rs = reachable_tasks(worker, tasks.values(), 0.0, TravelModel())
    seqs = maximal_valid_sequences(worker, rs, tasks, 0.0, TravelModel(), max_len)
    got = {q.task_set: q for q in seqs}
    cand = [tasks[i] for i in sorted(rs)]
    assert set(got) == feasible_sets(worker, cand, 0.0, TravelModel(), max_len)
    for subset, q in got.items():
        if not q.tasks:
            continue
        assert validate_sequence(worker, [tasks[i] for i in q.tasks], 0.0, TravelModel())
        assert q.completion == min_completion(worker, [tasks[i] for i in sorted(subset)],
                                              0.0, TravelModel())


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_catalog_matches_permutation_brute_force(seed):
    rng = np.random.default_rng(seed)
    workers, tasks = random_instance(rng, 1, 6, valid=(20.0, 150.0))
    _check_against_permutations(workers[0], tasks)
