"""Periodic MOT task model: workload pairs, WCET profiles, RM priorities and jobs.

All times are integer microseconds. Nothing on the scheduling or analysis
path touches floating point.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from decimal import Decimal, InvalidOperation
from typing import Iterable, Optional


class ConfigError(ValueError):
    """Malformed task-set or experiment configuration."""


class Level(str, enum.Enum):
    L = "L"
    H = "H"


class Pair(str, enum.Enum):
    """(detection level, association level) choice for one frame."""

    LL = "LL"
    LH = "LH"
    HL = "HL"
    HH = "HH"

    @property
    def detection(self) -> Level:
        return Level(self.value[0])

    @property
    def association(self) -> Level:
        return Level(self.value[1])

    @classmethod
    def of(cls, detection: Level | str, association: Level | str) -> "Pair":
        return cls(Level(detection).value + Level(association).value)


# Enumeration order used by the online scheduler.
PAIRS = (Pair.LL, Pair.LH, Pair.HL, Pair.HH)


@dataclass(frozen=True)
class WcetProfile:
    """Component WCETs (µs) of one tracking-by-detection pipeline."""

    c_pre: int
    c_infer_l: int
    c_infer_h: int
    c_as_l: int
    c_as_h: int
    c_post: int

    def __post_init__(self):
        for name in ("c_pre", "c_infer_l", "c_infer_h", "c_as_l", "c_as_h", "c_post"):
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool):
                raise ConfigError(f"{name} must be an integer number of µs, got {value!r}")
            if value < 0:
                raise ConfigError(f"{name} must be non-negative, got {value}")
        if not self.c_as_l < self.c_as_h:
            raise ConfigError("low-confidence association must be cheaper than high-confidence")
        if self.c_infer_l > self.c_infer_h:
            raise ConfigError("low-confidence inference must not exceed high-confidence")

    def detection(self, level: Level) -> int:
        infer = self.c_infer_h if level is Level.H else self.c_infer_l
        return self.c_pre + infer

    def association(self, level: Level) -> int:
        assoc = self.c_as_h if level is Level.H else self.c_as_l
        return assoc + self.c_post


def wcet_of(profile: WcetProfile, pair: Pair) -> int:
    return profile.detection(pair.detection) + profile.association(pair.association)


# Per-component maxima of the measured execution times.
REFERENCE_PROFILE = WcetProfile(
    c_pre=900, c_infer_l=17_600, c_infer_h=23_200, c_as_l=9_600, c_as_h=32_700, c_post=900
)


@dataclass(frozen=True)
class TaskSpec:
    """A strictly periodic MOT task with implicit deadline (= period)."""

    id: int
    period: int
    wcet: WcetProfile
    priority: Optional[int] = None
    phase: int = 0

    def __post_init__(self):
        if self.period <= 0:
            raise ConfigError(f"task {self.id}: period must be positive, got {self.period}")
        if self.phase < 0:
            raise ConfigError(f"task {self.id}: phase must be non-negative, got {self.phase}")

    def c(self, pair: Pair = Pair.LL) -> int:
        return wcet_of(self.wcet, pair)

    @property
    def c_ll(self) -> int:
        return wcet_of(self.wcet, Pair.LL)


def rm_assign(tasks: Iterable[TaskSpec]) -> list[TaskSpec]:
    """Rate-monotonic ranks (0 = highest); equal periods ordered by id.

    The returned list keeps the input order.
    """
    tasks = list(tasks)
    if not tasks:
        raise ConfigError("task set is empty")
    ids = [t.id for t in tasks]
    if len(set(ids)) != len(ids):
        raise ConfigError(f"duplicate task ids in {ids}")
    order = sorted(range(len(tasks)), key=lambda i: (tasks[i].period, tasks[i].id))
    rank = {idx: r for r, idx in enumerate(order)}
    return [replace(t, priority=rank[i]) for i, t in enumerate(tasks)]


def by_priority(tasks: Iterable[TaskSpec]) -> list[TaskSpec]:
    """Tasks sorted highest priority first; requires assigned ranks."""
    tasks = list(tasks)
    if any(t.priority is None for t in tasks):
        raise ConfigError("priorities not assigned; call rm_assign first")
    ranks = sorted(t.priority for t in tasks)
    if ranks != list(range(len(tasks))):
        raise ConfigError(f"priority ranks must be a permutation of 0..n-1, got {ranks}")
    return sorted(tasks, key=lambda t: t.priority)


def hyperperiod(tasks: Iterable[TaskSpec]) -> int:
    from math import lcm

    return lcm(*(t.period for t in tasks))


class JobState(str, enum.Enum):
    PENDING = "pending"
    RUNNING = "running"
    FINISHED = "finished"
    MISSED = "missed"


@dataclass
class Job:
    task_id: int
    index: int
    release: int
    abs_deadline: int
    state: JobState = JobState.PENDING
    granted_pair: Optional[Pair] = None
    granted_budget: Optional[int] = None
    start: Optional[int] = None
    finish: Optional[int] = None

    def is_active(self, t: int) -> bool:
        return self.release <= t and self.state in (JobState.PENDING, JobState.RUNNING)


def release_job(task: TaskSpec, k: int) -> Job:
    if k < 0:
        raise ValueError(f"job index must be non-negative, got {k}")
    release = task.phase + k * task.period
    return Job(task_id=task.id, index=k, release=release, abs_deadline=release + task.period)


# --- config ingestion -------------------------------------------------------


def ms_to_us(value) -> int:
    """Exact decimal-ms to µs conversion; sub-µs precision is rejected."""
    if isinstance(value, bool):
        raise ConfigError(f"not a duration: {value!r}")
    try:
        us = Decimal(str(value)) * 1000
    except InvalidOperation as exc:
        raise ConfigError(f"not a duration: {value!r}") from exc
    if us != us.to_integral_value():
        raise ConfigError(f"{value} ms has sub-microsecond precision")
    return int(us)


def fps_to_period(fps) -> int:
    try:
        f = float(fps)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid fps {fps!r}") from exc
    if not f > 0:
        raise ConfigError(f"fps must be positive, got {fps}")
    return round(1e6 / f)


def profile_from_config(wcet_ms: dict) -> WcetProfile:
    keys = ("pre", "infer_l", "infer_h", "as_l", "as_h", "post")
    missing = [k for k in keys if k not in wcet_ms]
    if missing:
        raise ConfigError(f"wcet_ms missing {missing}")
    return WcetProfile(*(ms_to_us(wcet_ms[k]) for k in keys))


def tasks_from_config(config: dict) -> list[TaskSpec]:
    """Build an RM-ranked task set from ``{"tasks": [...]}``.

    Each entry carries ``id``, either ``fps`` or ``period_ms``, an optional
    ``phase_ms`` and ``wcet_ms`` (omitted or ``"reference"`` selects the
    reference component maxima).
    """
    entries = config.get("tasks") if isinstance(config, dict) else None
    if not entries:
        raise ConfigError("config has no tasks")
    tasks = []
    for i, entry in enumerate(entries):
        if not isinstance(entry, dict):
            raise ConfigError(f"task entry {i} is not an object")
        tid = entry.get("id", i)
        if not isinstance(tid, int) or isinstance(tid, bool):
            raise ConfigError(f"task id must be an integer, got {tid!r}")
        if "period_ms" in entry:
            period = ms_to_us(entry["period_ms"])
        elif "fps" in entry:
            period = fps_to_period(entry["fps"])
        else:
            raise ConfigError(f"task {tid}: need fps or period_ms")
        wcet = entry.get("wcet_ms", "reference")
        profile = REFERENCE_PROFILE if wcet == "reference" else profile_from_config(wcet)
        phase = ms_to_us(entry.get("phase_ms", 0))
        tasks.append(TaskSpec(id=tid, period=period, wcet=profile, phase=phase))
    return rm_assign(tasks)


def tasks_from_fps(fps: Iterable, profile: WcetProfile = REFERENCE_PROFILE) -> list[TaskSpec]:
    return rm_assign(
        TaskSpec(id=i, period=fps_to_period(f), wcet=profile) for i, f in enumerate(fps)
    )


def taskset_to_config(tasks: Iterable[TaskSpec]) -> dict:
    out = []
    for t in tasks:
        w = t.wcet
        out.append(
            {
                "id": t.id,
                "period_ms": str(Decimal(t.period) / 1000),
                "phase_ms": str(Decimal(t.phase) / 1000),
                "wcet_ms": {
                    k: str(Decimal(v) / 1000)
                    for k, v in zip(
                        ("pre", "infer_l", "infer_h", "as_l", "as_h", "post"),
                        (w.c_pre, w.c_infer_l, w.c_infer_h, w.c_as_l, w.c_as_h, w.c_post),
                    )
                },
            }
        )
    return {"tasks": out}
