"""Event-driven non-preemptive uniprocessor kernel with NPFP^min, NPFP^flex,
the no-priority-inversion flex variant and static-pair baselines."""

from __future__ import annotations

import enum
import logging
import random
from collections import Counter, deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional

from .analysis import GateCounter, SchedulerSnapshot, feasible_assignments
from .task_model import PAIRS, Job, JobState, Pair, TaskSpec, by_priority, release_job

logger = logging.getLogger(__name__)

GainFn = Callable[[int, Pair], float]


class Policy(str, enum.Enum):
    MIN = "min"
    FLEX = "flex"
    FLEX_NPI = "flex-npi"
    STATIC_LL = "static-LL"
    STATIC_LH = "static-LH"
    STATIC_HL = "static-HL"
    STATIC_HH = "static-HH"

    @property
    def analysis_pair(self) -> Pair:
        """Pair whose WCET the offline analysis must assume."""
        if self.value.startswith("static-"):
            return Pair(self.value[-2:])
        return Pair.LL


@dataclass(frozen=True)
class Decision:
    task_id: int
    pair: Pair
    budget: int
    gain: float = 0.0


def _highest_active(snapshot: SchedulerSnapshot) -> Optional[TaskSpec]:
    return next((t for t in snapshot.tasks if snapshot.active[t.id]), None)


def npfp_min_decide(snapshot: SchedulerSnapshot) -> Optional[Decision]:
    task = _highest_active(snapshot)
    if task is None:
        return None
    return Decision(task.id, Pair.LL, task.c_ll)


def static_decide(snapshot: SchedulerSnapshot, pair: Pair) -> Optional[Decision]:
    task = _highest_active(snapshot)
    if task is None:
        return None
    return Decision(task.id, pair, task.c(pair))


def _argmax(snapshot: SchedulerSnapshot, feasible, gain: Optional[GainFn]) -> Decision:
    # Ties: higher priority, then cheaper pair, then LL < LH < HL < HH.
    best, best_key = None, None
    for k, pair, budget in feasible:
        g = gain(k, pair) if gain is not None else 0.0
        key = (-g, snapshot.task(k).priority, budget, PAIRS.index(pair))
        if best_key is None or key < best_key:
            best, best_key = Decision(k, pair, budget, g), key
    return best


def npfp_flex_decide(snapshot: SchedulerSnapshot, gain: Optional[GainFn] = None,
                     counter: Optional[GateCounter] = None) -> Optional[Decision]:
    """Largest expected confidence gain over all gate-approved (job, pair)
    combinations; NPFP^min when nothing passes. ``gain=None`` scores every pair 0."""
    if not snapshot.active_ids:
        return None
    feasible = feasible_assignments(snapshot, counter=counter)
    if not feasible:
        return npfp_min_decide(snapshot)
    return _argmax(snapshot, feasible, gain)


def flex_npi_decide(snapshot: SchedulerSnapshot, gain: Optional[GainFn] = None,
                    counter: Optional[GateCounter] = None) -> Optional[Decision]:
    top = _highest_active(snapshot)
    if top is None:
        return None
    feasible = feasible_assignments(snapshot, candidates=[top.id], counter=counter)
    if not feasible:
        return npfp_min_decide(snapshot)
    return _argmax(snapshot, feasible, gain)


def decide(policy: Policy, snapshot: SchedulerSnapshot, gain: Optional[GainFn] = None,
           counter: Optional[GateCounter] = None) -> Optional[Decision]:
    if policy is Policy.MIN:
        return npfp_min_decide(snapshot)
    if policy is Policy.FLEX:
        return npfp_flex_decide(snapshot, gain, counter)
    if policy is Policy.FLEX_NPI:
        return flex_npi_decide(snapshot, gain, counter)
    return static_decide(snapshot, policy.analysis_pair)


@dataclass(frozen=True)
class ExecutionTimeModel:
    """Actual execution time of a granted job, never above its budget.

    ``wcet``: the budget itself. ``scaled``: ``fraction`` of it.
    ``stochastic``: uniform integer in ``[lo * budget, budget]``.
    """

    mode: str = "wcet"
    fraction: float = 1.0
    lo: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("wcet", "scaled", "stochastic"):
            raise ValueError(f"unknown execution model {self.mode!r}")
        if not 0 <= self.fraction <= 1 or not 0 <= self.lo <= 1:
            raise ValueError("fraction and lo must lie in [0, 1]")

    def sampler(self) -> Callable[[int], int]:
        if self.mode == "wcet":
            return lambda budget: budget
        if self.mode == "scaled":
            frac = Fraction(str(self.fraction))
            return lambda budget: int(budget * frac)
        rng = random.Random(f"exec:{self.seed}")
        lo = Fraction(str(self.lo))
        return lambda budget: rng.randint(int(budget * lo), budget)

    @classmethod
    def parse(cls, text: str, seed: int = 0) -> "ExecutionTimeModel":
        """``wcet``, ``scaled:0.8`` or ``stochastic[:lo]``."""
        name, _, arg = text.partition(":")
        if name == "wcet":
            return cls()
        if name == "scaled":
            return cls(mode="scaled", fraction=float(arg or 1.0))
        if name == "stochastic":
            return cls(mode="stochastic", lo=float(arg or 0.5), seed=seed)
        raise ValueError(f"unknown execution model {text!r}")


@dataclass
class Record:
    t: int
    task_id: int
    job_index: int
    release: int
    deadline: int
    pair: Pair
    budget: int
    actual: int
    inverted: bool
    gain: float

    @property
    def finish(self) -> int:
        return self.t + self.actual

    @property
    def miss(self) -> bool:
        return self.finish > self.deadline


@dataclass
class DecisionStat:
    t: int
    cause: str  # release_into_idle | job_completion | idle
    n_active: int
    check_calls: int = 0
    terms: int = 0


@dataclass
class ConfidenceSample:
    task_id: int
    frame: int
    n_tracklets: int
    measured: float
    predicted: dict
    pair: Pair


@dataclass
class Trace:
    policy: str
    horizon: int
    records: list = field(default_factory=list)
    idle: list = field(default_factory=list)
    decisions: list = field(default_factory=list)
    confidence: list = field(default_factory=list)

    @property
    def misses(self) -> list:
        return [r for r in self.records if r.miss]

    def pair_histogram(self) -> dict:
        counts = Counter(r.pair for r in self.records)
        return {p.value: counts.get(p, 0) for p in PAIRS}

    def mean_confidence(self) -> dict:
        per_task = {}
        for s in self.confidence:
            per_task.setdefault(s.task_id, []).append(s.measured)
        return {k: sum(v) / len(v) for k, v in sorted(per_task.items())}

    def overall_confidence(self) -> float:
        """Mean over tasks of the per-task frame-averaged measured confidence."""
        per_task = self.mean_confidence()
        return sum(per_task.values()) / len(per_task) if per_task else 0.0


def scheduler_work_counter(trace: Trace) -> list[tuple[int, int, int]]:
    """(t, check evaluations, summation terms) per decision instant."""
    return [(d.t, d.check_calls, d.terms) for d in trace.decisions]


def build_snapshot(t: int, tasks, pending: dict, next_release: dict) -> SchedulerSnapshot:
    active, release, index = {}, {}, {}
    for task in tasks:
        queue = pending[task.id]
        if queue:
            active[task.id] = True
            release[task.id] = queue[0].release + task.period
            index[task.id] = queue[0].index
        else:
            active[task.id] = False
            release[task.id] = next_release[task.id]
    return SchedulerSnapshot(now=t, tasks=tuple(tasks), active=active, release=release,
                             job_index=index)


PolicyFn = Callable[[SchedulerSnapshot, Optional[GainFn], Optional[GateCounter]], Optional[Decision]]


def simulate(tasks, policy, horizon: int, exec_model: Optional[ExecutionTimeModel] = None,
             scenario=None, gain: Optional[GainFn] = None, instrument: bool = False,
             on_decision: Optional[Callable[[SchedulerSnapshot], None]] = None) -> Trace:
    """Run the kernel over jobs released in ``[0, horizon)``.

    ``policy`` is a :class:`Policy` (or its name) or a callable with the
    signature of :func:`npfp_flex_decide`. With a ``scenario`` each completed
    job runs the tracking pipeline for its frame and, unless ``gain`` is given,
    the pipelines' expected confidence changes drive the flex policies.
    Released jobs always run to completion; late ones are flagged as misses.
    """
    if horizon <= 0:
        raise ValueError(f"horizon must be positive, got {horizon}")
    tasks = by_priority(tasks)
    if callable(policy) and not isinstance(policy, Policy):
        policy_fn, name = policy, getattr(policy, "__name__", "custom")
    else:
        pol = Policy(policy)
        policy_fn = lambda snap, g, c: decide(pol, snap, g, c)  # noqa: E731
        name = pol.value
    sample = (exec_model or ExecutionTimeModel()).sampler()

    pending = {t.id: deque() for t in tasks}
    next_k = {t.id: 0 for t in tasks}
    by_id = {t.id: t for t in tasks}

    def next_release(tid):
        task = by_id[tid]
        return task.phase + next_k[tid] * task.period

    pipelines = {}
    if scenario is not None:
        from .workload import TaskPipeline

        frames_needed = max((horizon - 1 - t.phase) // t.period for t in tasks)
        if scenario.horizon < frames_needed:
            raise ValueError(
                f"scenario covers {scenario.horizon} frames, simulation needs {frames_needed}")
        pipelines = {t.id: TaskPipeline(t.id, scenario) for t in tasks}
        if gain is None:
            def gain(tid, pair):
                return pipelines[tid].gains(pending[tid][0].index)[pair]

    trace = Trace(policy=name, horizon=horizon)
    counter = GateCounter() if instrument else None
    t = 0
    cause = "release_into_idle"
    while True:
        for task in tasks:
            while next_release(task.id) <= t and next_release(task.id) < horizon:
                pending[task.id].append(release_job(task, next_k[task.id]))
                next_k[task.id] += 1
        if not any(pending.values()):
            upcoming = [next_release(tid) for tid in next_k if next_release(tid) < horizon]
            if not upcoming:
                break
            nxt = min(upcoming)
            trace.idle.append((t, nxt))
            if instrument:
                trace.decisions.append(DecisionStat(t, "idle", 0))
            t, cause = nxt, "release_into_idle"
            continue

        snapshot = build_snapshot(t, tasks, pending, {tid: next_release(tid) for tid in next_k})
        if on_decision is not None:
            on_decision(snapshot)
        if counter is not None:
            counter.reset()
        decision = policy_fn(snapshot, gain, counter)
        if instrument:
            trace.decisions.append(DecisionStat(
                t, cause, len(snapshot.active_ids), counter.check_calls, counter.terms))

        job: Job = pending[decision.task_id].popleft()
        actual = sample(decision.budget)
        if not 0 <= actual <= decision.budget:
            raise AssertionError("execution model exceeded the granted budget")
        top = next(x for x in tasks if snapshot.active[x.id])
        job.state, job.start = JobState.RUNNING, t
        job.granted_pair, job.granted_budget = decision.pair, decision.budget
        rec = Record(
            t=t, task_id=job.task_id, job_index=job.index, release=job.release,
            deadline=job.abs_deadline, pair=decision.pair, budget=decision.budget,
            actual=actual, inverted=top.id != job.task_id, gain=decision.gain,
        )
        trace.records.append(rec)
        t += actual
        job.finish = t
        job.state = JobState.MISSED if t > job.abs_deadline else JobState.FINISHED
        if rec.miss:
            logger.debug("task %d job %d missed its deadline by %d us",
                         job.task_id, job.index, t - job.abs_deadline)
        if pipelines:
            pipe = pipelines[job.task_id]
            predicted = pipe.predicted(job.index)
            pipe.run(decision.pair, job.index)
            trace.confidence.append(ConfidenceSample(
                job.task_id, job.index, len(pipe.tracklets), pipe.measured(), predicted,
                decision.pair))
        cause = "job_completion"
    return trace
