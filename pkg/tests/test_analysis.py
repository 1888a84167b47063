import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from rtmot.analysis import (
    GateCounter, SchedulerSnapshot, ceil_div, check_active, check_inactive, check_self,
    feasible_assignments, gate, rta_min,
)
from rtmot.oracle import exhaustive_future_check, fuzz_snapshots, random_taskset
from rtmot.task_model import PAIRS, REFERENCE_PROFILE, ConfigError, Pair, TaskSpec, WcetProfile, rm_assign, tasks_from_fps

MS = 1000
# C^LL = 20 ms, C^HH = 40 ms
P20 = WcetProfile(0, 10 * MS, 15 * MS, 10 * MS, 25 * MS, 0)


def snap(tasks, now, active, release):
    return SchedulerSnapshot(now=now, tasks=tuple(tasks), active=active, release=release)


@pytest.fixture
def two_active():
    tasks = rm_assign([TaskSpec(1, 100 * MS, P20), TaskSpec(2, 200 * MS, P20)])
    return snap(tasks, 0, {1: True, 2: True}, {1: 100 * MS, 2: 200 * MS})


@pytest.fixture
def one_inactive():
    # j (id 1) is highest priority and next releases at 150 ms; k (id 2) is active.
    tasks = rm_assign([TaskSpec(1, 100 * MS, P20, phase=150 * MS), TaskSpec(2, 300 * MS, P20)])
    return snap(tasks, 0, {1: False, 2: True}, {1: 150 * MS, 2: 300 * MS})


def test_ceil_div():
    assert [ceil_div(a, 3) for a in (0, 1, 3, 4)] == [0, 1, 1, 2]


def test_rta_single_task():
    res = rta_min([TaskSpec(0, 100 * MS, REFERENCE_PROFILE, priority=0)])
    assert res.response_time == {0: 29 * MS} and res.schedulable


def test_rta_reference_six_four_fps():
    res = rta_min(tasks_from_fps([6, 4]))
    assert res.response_time == {0: 58 * MS, 1: 58 * MS}
    assert res.schedulable


def test_rta_overloaded_pair():
    tasks = rm_assign([TaskSpec(0, 30 * MS, REFERENCE_PROFILE), TaskSpec(1, 30 * MS, REFERENCE_PROFILE)])
    res = rta_min(tasks)
    assert res.response_time[0] >= 58 * MS and not res.task_schedulable[0]
    assert not res.schedulable


def test_rta_static_hh_pair():
    assert not rta_min(tasks_from_fps([10, 8]), Pair.HH).schedulable
    assert rta_min(tasks_from_fps([10, 8]), Pair.LL).schedulable


def test_rta_empty_rejected():
    with pytest.raises(ConfigError):
        rta_min([])


@given(st.integers(0, 2**32))
def test_rta_result_invariants(seed):
    rng = random.Random(seed)
    tasks = random_taskset(rng, rng.randint(1, 5), rng.uniform(0.2, 1.3))
    res = rta_min(tasks)
    for t in tasks:
        assert res.task_schedulable[t.id] == (res.response_time[t.id] <= t.period)
        assert res.response_time[t.id] >= t.c_ll


@pytest.mark.parametrize("c,expected", [(50, True), (100, True), (101, False)])
def test_check_self(c, expected):
    tasks = rm_assign([TaskSpec(0, 100 * MS, P20)])
    s = snap(tasks, 0, {0: True}, {0: 100 * MS})
    assert check_self(c * MS, s, 0) is expected


def test_check_self_requires_active():
    tasks = rm_assign([TaskSpec(0, 100 * MS, P20)])
    with pytest.raises(ValueError):
        check_self(1, snap(tasks, 0, {0: False}, {0: 100 * MS}), 0)


def test_check_active_admits_short_grant(two_active):
    # 20 + 50 + ceil(100/100)*20 = 90 <= 200
    assert check_active(2, 1, 50 * MS, two_active)
    assert exhaustive_future_check(two_active, 1, 50 * MS)


def test_check_active_rejects_long_grant(two_active):
    # 20 + 200 + 20 = 240 > 200
    assert not check_active(2, 1, 200 * MS, two_active)
    assert not exhaustive_future_check(two_active, 1, 200 * MS)


def test_check_active_self_counts_ll_twice():
    tasks = rm_assign([TaskSpec(0, 100 * MS, P20)])
    s = snap(tasks, 0, {0: True}, {0: 40 * MS})
    assert check_active(0, 0, 20 * MS, s)  # 2 * 20 <= 40
    s = snap(tasks, 0, {0: True}, {0: 39 * MS})
    assert not check_active(0, 0, 20 * MS, s)


def test_check_inactive_examples(one_inactive):
    assert check_inactive(1, 2, 50 * MS, one_inactive)  # 70 <= 250
    assert not check_inactive(1, 2, 240 * MS, one_inactive)  # 260 > 250


def test_check_inactive_contract(one_inactive, two_active):
    with pytest.raises(ValueError):
        check_inactive(2, 2, 1, one_inactive)
    with pytest.raises(ValueError):
        check_inactive(1, 2, 1, two_active)
    with pytest.raises(ValueError):
        check_active(1, 2, 1, one_inactive)


def test_check_inactive_without_interference():
    tasks = rm_assign([TaskSpec(1, 100 * MS, P20), TaskSpec(2, 300 * MS, P20)])
    s = snap(tasks, 0, {1: False, 2: True}, {1: 10_000 * MS, 2: 300 * MS})
    assert check_inactive(1, 2, 20 * MS, s)


def test_feasible_all_pairs_with_slack():
    tasks = rm_assign([TaskSpec(0, 10_000 * MS, REFERENCE_PROFILE)])
    s = snap(tasks, 0, {0: True}, {0: 10_000 * MS})
    assert [p for _, p, _ in feasible_assignments(s)] == list(PAIRS)


def test_feasible_filtered_by_own_deadline():
    # A lone task: self check C <= 41 and the j == k check 20 + C <= 41.
    p = WcetProfile(0, 10 * MS, 30 * MS, 10 * MS, 12 * MS, 0)  # LL 20, LH 22, HL 40, HH 42
    tasks = rm_assign([TaskSpec(0, 10_000 * MS, p)])
    s = snap(tasks, 0, {0: True}, {0: 41 * MS})
    assert check_self(40 * MS, s, 0) and not check_self(42 * MS, s, 0)
    assert [pair for _, pair, _ in feasible_assignments(s)] == [Pair.LL]
    s = snap(tasks, 0, {0: True}, {0: 61 * MS})
    assert [pair for _, pair, _ in feasible_assignments(s)] == [Pair.LL, Pair.LH, Pair.HL]


def test_feasible_two_task_example(two_active):
    assert gate(two_active, 1, 50 * MS)
    assert not gate(two_active, 1, 200 * MS)


def test_ll_counterexample_on_schedulable_set():
    # Offline schedulable, yet the literal j == k check rejects even LL.
    task = TaskSpec(0, 100 * MS, WcetProfile(0, 30 * MS, 30 * MS, 30 * MS, 40 * MS, 0), priority=0)
    assert rta_min([task]).schedulable
    s = snap([task], 0, {0: True}, {0: 100 * MS})
    assert feasible_assignments(s) == []


def test_counter_counts_checks():
    tasks = rm_assign([TaskSpec(0, 10_000 * MS, REFERENCE_PROFILE)])
    s = snap(tasks, 0, {0: True}, {0: 10_000 * MS})
    counter = GateCounter()
    feasible_assignments(s, counter=counter)
    assert counter.check_calls == 8  # 4 pairs x (self + one task)
    counter.reset()
    assert counter.check_calls == counter.terms == 0


SNAPSHOTS = list(fuzz_snapshots(200, seed=11))


@given(st.sampled_from(SNAPSHOTS), st.data())
def test_checks_monotone_in_budget(s, data):
    k = data.draw(st.sampled_from(s.active_ids))
    c = data.draw(st.integers(0, 2 * s.task(k).c(Pair.HH)))
    smaller = data.draw(st.integers(0, c))
    if gate(s, k, c):
        assert gate(s, k, smaller)


@given(st.sampled_from(SNAPSHOTS))
def test_admitted_grants_survive_their_future(s):
    for k, pair, c in feasible_assignments(s):
        assert exhaustive_future_check(s, k, c)
