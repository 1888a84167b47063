"""Offline response-time analysis for NPFP^min and the online feasibility gates
used by NPFP^flex.

All arithmetic is on integer microseconds.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional

from .task_model import PAIRS, ConfigError, Pair, TaskSpec, by_priority


def ceil_div(a: int, b: int) -> int:
    return (a + b - 1) // b


@dataclass(frozen=True)
class RtaResult:
    # For an unschedulable task this is the first candidate that exceeded the period.
    response_time: dict
    task_schedulable: dict
    iterations: dict
    pair: Pair = Pair.LL

    @property
    def schedulable(self) -> bool:
        return all(self.task_schedulable.values())


def rta_min(tasks: Iterable[TaskSpec], pair: Pair = Pair.LL) -> RtaResult:
    """Non-preemptive FP response-time analysis.

    Every job is assumed to execute ``pair`` (LL for NPFP^min and NPFP^flex,
    a fixed pair for the static baselines). Iteration for a task stops as soon
    as the candidate exceeds its period.
    """
    ordered = by_priority(tasks)
    if not ordered:
        raise ConfigError("task set is empty")
    cost = {t.id: t.c(pair) for t in ordered}
    resp, ok, iters = {}, {}, {}
    for i, task in enumerate(ordered):
        hp = ordered[:i]
        blocking = max((cost[t.id] for t in ordered[i + 1:]), default=0)
        base = cost[task.id] + blocking
        r = base
        n = 0
        while True:
            n += 1
            nxt = base + sum(ceil_div(r, h.period) * cost[h.id] for h in hp)
            if nxt > task.period:
                r = nxt
                break
            if nxt == r:
                break
            r = nxt
        resp[task.id] = r
        ok[task.id] = r <= task.period
        iters[task.id] = n
    return RtaResult(resp, ok, iters, pair)


@dataclass
class GateCounter:
    """Work instrumentation for the online gate."""

    check_calls: int = 0
    terms: int = 0

    def reset(self):
        self.check_calls = 0
        self.terms = 0


@dataclass(frozen=True)
class SchedulerSnapshot:
    """State of the platform at a decision instant ``now``.

    ``active[i]`` tells whether task ``i`` has an active job. ``release[i]`` is
    that job's absolute deadline (its release plus the period) when active,
    otherwise the next release at or after ``now``.
    """

    now: int
    tasks: tuple
    active: dict
    release: dict
    job_index: dict = field(default_factory=dict)

    def __post_init__(self):
        ordered = tuple(by_priority(self.tasks))
        object.__setattr__(self, "tasks", ordered)
        object.__setattr__(self, "_by_id", {t.id: t for t in ordered})
        object.__setattr__(self, "_hp", {t.id: ordered[: t.priority] for t in ordered})

    def task(self, task_id: int) -> TaskSpec:
        return self._by_id[task_id]

    def higher(self, task_id: int) -> tuple:
        return self._hp[task_id]

    @property
    def active_ids(self) -> list[int]:
        return [t.id for t in self.tasks if self.active[t.id]]


def check_self(c_k: int, snapshot: SchedulerSnapshot, k: int,
               counter: Optional[GateCounter] = None) -> bool:
    if not snapshot.active[k]:
        raise ValueError(f"task {k} has no active job at t={snapshot.now}")
    if counter is not None:
        counter.check_calls += 1
        counter.terms += 1
    return c_k <= snapshot.release[k] - snapshot.now


def _demand(snapshot: SchedulerSnapshot, j: int, k: int, c_k: int, window_end: int,
            counter: Optional[GateCounter]) -> int:
    total = snapshot.task(j).c_ll + c_k
    hp = snapshot.higher(j)
    for h in hp:
        if h.id != k and snapshot.active[h.id]:
            total += h.c_ll
        r_h = snapshot.release[h.id]
        if r_h < window_end:
            total += ceil_div(window_end - r_h, h.period) * h.c_ll
    if counter is not None:
        counter.check_calls += 1
        counter.terms += 1 + len(hp)
    return total


def check_active(j: int, k: int, c_k: int, snapshot: SchedulerSnapshot,
                 counter: Optional[GateCounter] = None) -> bool:
    """Guard for the earliest job of an active task ``j`` run after ``J_k``.

    ``j == k`` is allowed and evaluated literally.
    """
    if not snapshot.active[j]:
        raise ValueError(f"task {j} is not active at t={snapshot.now}")
    r_j = snapshot.release[j]
    return _demand(snapshot, j, k, c_k, r_j, counter) <= r_j - snapshot.now


def check_inactive(j: int, k: int, c_k: int, snapshot: SchedulerSnapshot,
                   counter: Optional[GateCounter] = None) -> bool:
    """Guard for the next job of a currently inactive task ``j``."""
    if j == k:
        raise ValueError("the granted task is active; use check_active")
    if snapshot.active[j]:
        raise ValueError(f"task {j} is active at t={snapshot.now}")
    end = snapshot.release[j] + snapshot.task(j).period
    return _demand(snapshot, j, k, c_k, end, counter) <= end - snapshot.now


def gate(snapshot: SchedulerSnapshot, k: int, c_k: int,
         counter: Optional[GateCounter] = None) -> bool:
    """All three conditions for running the active job of ``k`` for ``c_k``."""
    if not check_self(c_k, snapshot, k, counter):
        return False
    for t in snapshot.tasks:
        if snapshot.active[t.id]:
            ok = check_active(t.id, k, c_k, snapshot, counter)
        else:
            ok = check_inactive(t.id, k, c_k, snapshot, counter)
        if not ok:
            return False
    return True


def feasible_assignments(snapshot: SchedulerSnapshot, candidates: Optional[Iterable[int]] = None,
                         counter: Optional[GateCounter] = None) -> list[tuple[int, Pair, int]]:
    """(task id, pair, budget) for every active job and pair that passes the gate.

    ``candidates`` restricts which active tasks are examined (all by default).
    """
    ids = snapshot.active_ids if candidates is None else list(candidates)
    out = []
    for k in ids:
        task = snapshot.task(k)
        for pair in PAIRS:
            c_k = task.c(pair)
            if gate(snapshot, k, c_k, counter):
                out.append((k, pair, c_k))
    return out
