from dataclasses import replace

import numpy as np
import pytest

from datawa.core import Location, Task, TravelModel, Worker
from datawa.ddgnn import DemandConfig, init_params
from datawa.engine import (ConfigurationError, EngineConfig, Simulator, Strategy, adaptive_assign,
                           baseline_assign, tpa)
from datawa.stream import EventStream
from datawa.workload import WorkloadConfig, random_instance, synth_workload

from builders import figure_one_stream
from oracles import joint_optimum

UNIT = EngineConfig(model=TravelModel(1.0))
SMALL = WorkloadConfig(n_workers=12, n_tasks=120, duration=600.0, seed=4)


def always_predicting_model(w: WorkloadConfig, p_len: int = 2):
    """A demand model forecasting the first slot of every window in every cell."""
    p = init_params(DemandConfig(k=w.k, P=p_len, n_cells=w.rows * w.cols, embed_dim=2,
                                 channels=2))
    p.arrays["out_w"][:] = 0.0
    p.arrays["out_b"][:] = -10.0
    p.arrays["out_b"][0] = 10.0
    return p


def engine_for(w: WorkloadConfig) -> EngineConfig:
    return EngineConfig(grid=w.grid, k=w.k, dt=w.dt, t0=w.t_start, task_valid=w.task_valid)


def test_figure_one_fixed_plans_assign_five_and_replanning_eight():
    st = figure_one_stream()
    fixed = Simulator(Strategy.FTA, UNIT).run(st).assignment
    adaptive = adaptive_assign(st, UNIT)
    assert fixed.count() == 5
    assert adaptive.count() == 8
    assert baseline_assign("DTA", st, UNIT).count() == 8


def test_strategy_names_parse_loosely():
    assert Strategy.parse("data-wa") is Strategy.DATA_WA
    assert Strategy.parse("DTA+TP") is Strategy.DTA_TP
    assert Strategy.parse("greedy") is Strategy.GREEDY
    with pytest.raises(ConfigurationError):
        Strategy.parse("best")


def test_prediction_strategies_need_a_matching_model():
    with pytest.raises(ConfigurationError):
        Simulator(Strategy.DTA_TP, engine_for(SMALL))
    with pytest.raises(ConfigurationError):
        Simulator(Strategy.DTA_TP, EngineConfig(), always_predicting_model(SMALL))
    wrong = init_params(DemandConfig(k=6, P=2, n_cells=16))
    with pytest.raises(ConfigurationError):
        Simulator(Strategy.DATA_WA, engine_for(SMALL), wrong)


@pytest.mark.parametrize("seed", range(6))
def test_planning_assignment_is_optimal_on_snapshots(seed):
    workers, tasks = random_instance(np.random.default_rng(seed), 4, 6)
    pa = tpa(workers, tasks, 0.0)
    assert pa.task_count() == joint_optimum(workers, tasks, 0.0, TravelModel(), 4)
    assert len({t for _, q in pa.pairs for t in q.tasks}) == pa.task_count()


def check_run(stream: EventStream, result) -> None:
    tasks = {t.id: t for t in stream.tasks}
    workers = {w.id: w for w in stream.workers}
    seen = set()
    per_worker: dict[int, list[float]] = {}
    for wid, seq in result.assignment.pairs:
        for tid, arr in zip(seq.tasks, seq.arrival):
            assert tid > 0 and tid in tasks, "only real tasks are counted"
            assert tid not in seen
            seen.add(tid)
            s = tasks[tid]
            assert s.pub_time <= arr < s.exp_time
            assert arr < workers[wid].off_time
            per_worker.setdefault(wid, []).append(arr)
    for times in per_worker.values():
        assert times == sorted(times) and len(set(times)) == len(times)


@pytest.mark.parametrize("strategy", list(Strategy))
def test_run_invariants_for_every_strategy(strategy):
    stream = synth_workload(SMALL)
    demand = always_predicting_model(SMALL) if strategy in (Strategy.DTA_TP, Strategy.DATA_WA) \
        else None
    res = Simulator(strategy, engine_for(SMALL), demand).run(stream)
    check_run(stream, res)
    assert 0 < res.assignment.count() <= len(stream.tasks)
    assert all(t.id > 0 for t in res.final_open_tasks) or demand is not None


def test_forecast_tasks_are_dispatched_but_never_counted():
    stream = synth_workload(SMALL)
    res = Simulator(Strategy.DTA_TP, engine_for(SMALL), always_predicting_model(SMALL)).run(stream)
    assert res.dispatched_predicted > 0
    assert all(t > 0 for t in res.assignment.task_ids())


def test_greedy_takes_each_workers_longest_sequence_in_id_order():
    ws = [Worker(1, Location(0, 0), 5.0, 1.0, 99), Worker(2, Location(0, 0), 5.0, 1.0, 99)]
    ts = [Task(i, Location(i, 0), 0.5, 50) for i in (1, 2, 3)]
    res = Simulator(Strategy.GREEDY, UNIT).run(EventStream.from_objects(ws, ts))
    assert res.assignment.by_worker() == {1: [1, 2, 3]}


def test_fixed_plans_commit_whole_sequences_and_replanning_only_heads():
    ws = [Worker(1, Location(0, 0), 5.0, 1.0, 99)]
    ts = [Task(1, Location(1, 0), 0.5, 50), Task(2, Location(2, 0), 0.5, 50)]
    st = EventStream.from_objects(ws, ts)
    fta = Simulator(Strategy.FTA, UNIT).run(st)
    dta = Simulator(Strategy.DTA, UNIT).run(st)
    assert [len(q) for _, q in fta.assignment.pairs] == [2]
    assert [len(q) for _, q in dta.assignment.pairs] == [1, 1]
    assert fta.stats.plans < dta.stats.plans


def test_workers_that_go_offline_are_dropped():
    ws = [Worker(1, Location(0, 0), 1.0, 0.0, 5.0), Worker(2, Location(3, 0), 1.0, 0.0, 99.0)]
    ts = [Task(1, Location(3.5, 0), 10.0, 40.0), Task(2, Location(0.2, 0), 20.0, 40.0)]
    res = Simulator(Strategy.DTA, UNIT).run(EventStream.from_objects(ws, ts))
    assert res.assignment.by_worker() == {2: [1]}
    assert [w.id for w in res.final_workers] == [2]


def test_empty_stream_runs():
    res = Simulator(Strategy.DTA, UNIT).run(EventStream())
    assert res.assignment.count() == 0


def test_runs_are_repeatable():
    w = replace(SMALL, seed=9)
    stream = synth_workload(w)
    a = Simulator(Strategy.DTA, engine_for(w)).run(stream)
    b = Simulator(Strategy.DTA, engine_for(w)).run(stream)
    assert a.assignment.pairs == b.assignment.pairs
    assert a.stats.expansions == b.stats.expansions
