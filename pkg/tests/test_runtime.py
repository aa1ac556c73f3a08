import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from batteryph.ph import PHOptions, make_partition, run_ph, trace_without_timing
from batteryph.runtime import WorkerError, WorkerPool, WorkPlan, ordered_reduce, ordered_sum, parallel_map

from conftest import case_study


def square(x):
    return x * x


def fail_on_two(x):
    if x == 2:
        raise ValueError("bad input 2")
    if x == 4:
        raise ValueError("bad input 4")
    return x


class Counter:
    """Per-period state kept inside a worker between rounds."""

    def __init__(self, periods):
        self.seen = {p: 0 for p in periods}

    def __call__(self, period, task):
        self.seen[period] += task
        return (period, self.seen[period])


@pytest.mark.parametrize("workers", [1, 3, 8])
def test_parallel_map_keeps_period_order(workers):
    plan = WorkPlan.blocks(7, workers)
    assert parallel_map(plan, range(7), square) == [0, 1, 4, 9, 16, 25, 36]


@pytest.mark.parametrize("workers", [1, 2])
def test_failure_names_lowest_period(workers):
    plan = WorkPlan.blocks(6, workers)
    with pytest.raises(WorkerError) as info:
        parallel_map(plan, range(6), fail_on_two)
    assert info.value.period == 2
    assert "bad input 2" in str(info.value)


def test_empty_plan():
    assert parallel_map(WorkPlan.blocks(0, 4), [], square) == []


def test_task_count_must_match_plan():
    with pytest.raises(ValueError):
        parallel_map(WorkPlan.blocks(3, 1), [1, 2], square)


def test_blocks_are_contiguous_and_balanced():
    plan = WorkPlan.blocks(10, 3)
    assert plan.assignment == (0, 0, 0, 0, 1, 1, 1, 2, 2, 2)
    assert plan.periods_of(1) == [4, 5, 6]
    assert WorkPlan.blocks(2, 8).assignment == (0, 1)


def test_plan_validation():
    with pytest.raises(ValueError):
        WorkPlan((0, 1), 1)
    with pytest.raises(ValueError):
        WorkPlan((0,), 1, policy="eager")


def test_async_split_shares_budget():
    solve, inc = WorkPlan.blocks(8, 8, "async-incumbent").split_for_async()
    assert solve.workers + inc.workers == 8


def test_worker_state_persists_between_rounds():
    with WorkerPool(WorkPlan.blocks(4, 2), Counter) as pool:
        first = pool.run({p: 1 for p in range(4)})
        second = pool.run({1: 5, 3: 2})
    assert first == [(p, 1) for p in range(4)]
    assert second == [(1, 6), (3, 3)]


def test_ordered_sum_is_left_fold():
    vals = [1e16, 1.0, -1e16, 1.0]
    acc = 0.0
    for v in vals:
        acc += v
    assert ordered_sum(vals) == acc
    assert ordered_reduce([], max, initial=3) == 3
    with pytest.raises(ValueError):
        ordered_reduce([], max)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e12, 1e12), max_size=30))
def test_ordered_sum_matches_sequential(vals):
    acc = 0.0
    for v in vals:
        acc += v
    assert ordered_sum(vals) == acc


def ph_run(workers, policy="sync"):
    s = case_study("threebus", horizon_hours=72)
    cfg = s.config
    opts = PHOptions(rho=cfg.ph.rho, refine=cfg.ph.refine, refine_ratio=cfg.ph.refine_ratio,
                     max_iters=6, tol=1e-12, workers=workers, policy=policy)
    return run_ph(s.network, make_partition(72, 24), cfg.battery, cfg.cost, s.schedule, s.demand, opts)


def test_ph_is_deterministic_across_worker_counts():
    runs = [ph_run(w) for w in (1, 2, 8)]
    ref = trace_without_timing(runs[0].trace)
    for r in runs[1:]:
        assert trace_without_timing(r.trace) == ref
        assert r.ub == runs[0].ub and r.lb == runs[0].lb
        assert np.array_equal(r.solution.placement, runs[0].solution.placement)
        assert np.array_equal(r.solution.soc, runs[0].solution.soc)
