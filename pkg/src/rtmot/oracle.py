"""Brute-force checks for the analysis.

``tick_simulate_min`` replays NPFP^min one quantum at a time;
``exhaustive_future_check`` plays out the single NPFP^min future that follows a
grant. Neither shares code with the event-driven kernel in ``scheduler``.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from math import lcm
from typing import Optional

from .analysis import SchedulerSnapshot, feasible_assignments, rta_min
from .task_model import Pair, TaskSpec, WcetProfile, by_priority, rm_assign

# Small-LCM period pool (ms) for oracle suites: hyperperiod at most 200 ms.
PERIOD_POOL_MS = (10, 20, 25, 40, 50, 100, 200)


@dataclass(frozen=True)
class TickSimConfig:
    """``offsets`` shift individual tasks (µs). With a ``blocker`` WCET, a one-shot
    lowest-priority job is released one quantum before the task releases and
    only tasks in ``watch`` have their misses reported."""

    quantum: int = 100
    offsets: Optional[dict] = None
    blocker: int = 0
    horizon: Optional[int] = None
    watch: Optional[frozenset] = None


@dataclass
class MissReport:
    horizon: int
    jobs: int = 0
    misses: list = field(default_factory=list)  # (task id, job index, lateness µs)

    @property
    def ok(self) -> bool:
        return not self.misses


def tick_simulate_min(tasks, config: TickSimConfig = TickSimConfig()) -> MissReport:
    tasks = by_priority(tasks)
    q = config.quantum
    offsets = config.offsets or {}
    durations = [t.period for t in tasks] + [t.c_ll for t in tasks] + [config.blocker]
    durations += [offsets.get(t.id, 0) + t.phase for t in tasks]
    if config.horizon is not None:
        durations.append(config.horizon)
    if q <= 0 or any(d % q for d in durations):
        raise ValueError(f"quantum {q} does not divide every duration of the task set")

    lead = 1 if config.blocker else 0
    hyper = lcm(*(t.period for t in tasks))
    horizon = config.horizon if config.horizon is not None else 2 * hyper + max(t.period for t in tasks)
    h_ticks = horizon // q
    period = [t.period // q for t in tasks]
    cost = [t.c_ll // q for t in tasks]
    first = [lead + (offsets.get(t.id, 0) + t.phase) // q for t in tasks]
    watch = config.watch

    n = len(tasks)
    next_rel = list(first)
    k = [0] * n
    queues = [[] for _ in range(n + 1)]  # (job index, deadline tick); slot n is the blocker
    if config.blocker:
        queues[n].append((0, None))
    running, remaining, run_job = None, 0, None
    report = MissReport(horizon=horizon)
    tick = 0
    while True:
        for i in range(n):
            if next_rel[i] == tick and next_rel[i] < h_ticks + lead:
                queues[i].append((k[i], next_rel[i] + period[i]))
                k[i] += 1
                next_rel[i] += period[i]
                report.jobs += 1
        while running is None:
            pick = next((i for i in range(n + 1) if queues[i]), None)
            if pick is None:
                break
            run_job = queues[pick].pop(0)
            running = pick
            remaining = cost[pick] if pick < n else config.blocker // q
            if remaining == 0:
                _finish(report, tasks, running, run_job, tick, q, watch)
                running = None
        if running is None and all(r >= h_ticks + lead for r in next_rel):
            break
        tick += 1
        if running is not None:
            remaining -= 1
            if remaining == 0:
                _finish(report, tasks, running, run_job, tick, q, watch)
                running = None
    return report


def _finish(report, tasks, slot, job, tick, q, watch):
    if slot >= len(tasks):
        return
    index, deadline = job
    if tick > deadline:
        tid = tasks[slot].id
        if watch is None or tid in watch:
            report.misses.append((tid, index, (tick - deadline) * q))


def critical_instant_configs(tasks, quantum: int) -> list[TickSimConfig]:
    """Synchronous release, plus for every task with lower-priority tasks a
    run in which the largest lower-priority LL job starts one quantum earlier."""
    ordered = by_priority(tasks)
    configs = [TickSimConfig(quantum=quantum)]
    for i, task in enumerate(ordered[:-1]):
        blocker = max(t.c_ll for t in ordered[i + 1:])
        if blocker == 0:
            continue
        watch = frozenset(t.id for t in ordered[: i + 1])
        configs.append(TickSimConfig(quantum=quantum, blocker=blocker, watch=watch))
    return configs


def exhaustive_future_check(snapshot: SchedulerSnapshot, task_id: int, c_k: int,
                            horizon: Optional[int] = None) -> bool:
    """True iff running ``task_id``'s active job for ``c_k`` at ``snapshot.now``
    and NPFP^min (every later job at its LL WCET) afterwards misses nothing.

    By default the future is followed to the first instant the processor has
    nothing pending, plus one hyperperiod.
    """
    tasks = snapshot.tasks
    if not snapshot.active[task_id]:
        raise ValueError(f"task {task_id} has no active job")
    t0 = snapshot.now
    if t0 + c_k > snapshot.release[task_id]:
        return False
    hyper = lcm(*(t.period for t in tasks))
    longest = max(t.period for t in tasks)
    pending = {t.id: [] for t in tasks}
    nxt = {}
    for t in tasks:
        nxt[t.id] = snapshot.release[t.id]
        if snapshot.active[t.id] and t.id != task_id:
            pending[t.id].append(snapshot.release[t.id])
    limit = t0 + horizon if horizon is not None else None
    cap = t0 + 4 * hyper + longest
    now = t0 + c_k
    while True:
        end = limit if limit is not None else cap
        for t in tasks:
            while nxt[t.id] <= now and nxt[t.id] < end:
                pending[t.id].append(nxt[t.id] + t.period)
                nxt[t.id] += t.period
        ready = next((t for t in tasks if pending[t.id]), None)
        if ready is None:
            if limit is None:
                limit = now + hyper
            upcoming = [r for r in nxt.values() if r < limit]
            if not upcoming:
                return True
            now = min(upcoming)
            continue
        deadline = pending[ready.id].pop(0)
        now += ready.c_ll
        if now > deadline:
            return False


# --- random instances -------------------------------------------------------


def uunifast(rng: random.Random, n: int, total: float) -> list[float]:
    utils, remaining = [], total
    for i in range(1, n):
        nxt = remaining * rng.random() ** (1.0 / (n - i))
        utils.append(remaining - nxt)
        remaining = nxt
    utils.append(remaining)
    return utils


def profile_for_ll(rng: random.Random, c_ll: int, quantum: int) -> WcetProfile:
    """A WCET profile whose LL cost is exactly ``c_ll`` with heavier H variants."""
    def rq(x):
        return int(round(x / quantum)) * quantum

    infer_l = min(rq(0.6 * c_ll), c_ll)
    as_l = c_ll - infer_l
    infer_h = infer_l + rq(rng.uniform(0.1, 0.6) * c_ll)
    as_h = as_l + max(quantum, rq(rng.uniform(0.3, 1.0) * c_ll))
    return WcetProfile(0, infer_l, infer_h, as_l, as_h, 0)


def random_taskset(rng: random.Random, n: int, utilization: float, quantum: int = 500,
                   periods_ms=PERIOD_POOL_MS) -> list[TaskSpec]:
    tasks = []
    for i, u in enumerate(uunifast(rng, n, utilization)):
        period = rng.choice(periods_ms) * 1000
        c_ll = max(quantum, int(round(u * period / quantum)) * quantum)
        tasks.append(TaskSpec(id=i, period=period, wcet=profile_for_ll(rng, c_ll, quantum)))
    return rm_assign(tasks)


def random_schedulable_taskset(rng: random.Random, n_max: int = 5, u_range=(0.3, 1.0),
                               quantum: int = 500, tries: int = 1000) -> list[TaskSpec]:
    for _ in range(tries):
        tasks = random_taskset(rng, rng.randint(1, n_max), rng.uniform(*u_range), quantum)
        if rta_min(tasks).schedulable:
            return tasks
    raise RuntimeError("no schedulable task set found")


# --- suites -----------------------------------------------------------------


@dataclass
class RtaSuiteReport:
    sets: int = 0
    schedulable: int = 0
    tick_runs: int = 0
    disagreements: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.disagreements


def verify_rta(n_sets: int = 1000, seed: int = 0, n_max: int = 5, u_range=(0.3, 1.2),
               quantum: int = 500) -> RtaSuiteReport:
    """Every RTA-schedulable random set must survive all critical-instant tick runs."""
    rng = random.Random(f"verify-rta:{seed}")
    report = RtaSuiteReport()
    for _ in range(n_sets):
        tasks = random_taskset(rng, rng.randint(1, n_max), rng.uniform(*u_range), quantum)
        report.sets += 1
        if not rta_min(tasks).schedulable:
            continue
        report.schedulable += 1
        for cfg in critical_instant_configs(tasks, quantum):
            report.tick_runs += 1
            result = tick_simulate_min(tasks, cfg)
            if not result.ok:
                report.disagreements.append((tasks, cfg, result.misses))
    return report


def fuzz_snapshots(n: int, seed: int = 0, n_max: int = 4, per_run: int = 20,
                   quantum: int = 500):
    """Decision-instant snapshots from legal NPFP^flex histories.

    Grants are driven by random gains so that the histories contain priority
    inversions and heavy pairs; execution times are stochastic.
    """
    from .scheduler import ExecutionTimeModel, simulate

    rng = random.Random(f"fuzz:{seed}")
    produced = 0
    while produced < n:
        tasks = random_schedulable_taskset(rng, n_max=n_max, u_range=(0.3, 1.0), quantum=quantum)
        hyper = lcm(*(t.period for t in tasks))
        captured = []
        gains_rng = random.Random(rng.random())
        simulate(
            tasks, "flex", 3 * hyper,
            exec_model=ExecutionTimeModel("stochastic", lo=0.3, seed=rng.randrange(1 << 30)),
            gain=lambda k, p: gains_rng.random(),
            on_decision=captured.append,
        )
        for snap in rng.sample(captured, min(per_run, len(captured))):
            yield snap
            produced += 1
            if produced >= n:
                return


@dataclass
class GateSuiteReport:
    snapshots: int = 0
    admitted: int = 0
    rejected_but_safe: int = 0
    rejected: int = 0
    disagreements: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.disagreements


def verify_gate(n_snapshots: int = 10_000, seed: int = 0, n_max: int = 4) -> GateSuiteReport:
    """Every gate-admitted grant must survive its exhaustive NPFP^min future."""
    report = GateSuiteReport()
    for snap in fuzz_snapshots(n_snapshots, seed, n_max=n_max):
        report.snapshots += 1
        admitted = {(k, p) for k, p, _ in feasible_assignments(snap)}
        for k in snap.active_ids:
            task = snap.task(k)
            for p in Pair:
                safe = exhaustive_future_check(snap, k, task.c(p))
                if (k, p) in admitted:
                    report.admitted += 1
                    if not safe:
                        report.disagreements.append((snap, k, p))
                else:
                    report.rejected += 1
                    report.rejected_but_safe += safe
    return report


@dataclass
class FlexSuiteReport:
    runs: int = 0
    jobs: int = 0
    upgraded: int = 0  # grants with a pair other than LL
    inversions: int = 0
    misses: list = field(default_factory=list)  # (tasks, seed, miss records)

    @property
    def ok(self) -> bool:
        return not self.misses


def verify_flex(n_sets: int = 500, seeds=(0, 1, 2), seed: int = 0, n_max: int = 4,
                hyperperiods: int = 3, policy: str = "flex") -> FlexSuiteReport:
    """Confidence-driven flex runs on offline-schedulable sets must never miss."""
    from .scheduler import ExecutionTimeModel, simulate
    from .workload import ScenarioParams, generate_scenario

    rng = random.Random(f"verify-flex:{seed}")
    report = FlexSuiteReport()
    for _ in range(n_sets):
        tasks = random_schedulable_taskset(rng, n_max=n_max, u_range=(0.3, 1.0))
        horizon = hyperperiods * lcm(*(t.period for t in tasks))
        frames = max(horizon // t.period for t in tasks) + 1
        for s in seeds:
            scenario = generate_scenario(s, ScenarioParams(n_objects=6, horizon=frames),
                                         task_ids=[t.id for t in tasks])
            model = ExecutionTimeModel("stochastic", lo=0.5, seed=s) if s % 2 else None
            trace = simulate(tasks, policy, horizon, exec_model=model, scenario=scenario)
            report.runs += 1
            report.jobs += len(trace.records)
            report.upgraded += sum(r.pair is not Pair.LL for r in trace.records)
            report.inversions += sum(r.inverted for r in trace.records)
            if trace.misses:
                report.misses.append((tasks, s, trace.misses))
    return report
