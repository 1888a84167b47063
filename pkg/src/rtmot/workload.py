"""Synthetic camera + detector + tracker.

A :class:`Scenario` holds ground-truth object trajectories per task. Running a
frame with a (detection, association) pair yields the per-tracklet match
categories that the confidence model consumes.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import asdict, dataclass, field
from typing import Optional

from .confidence import (
    MatchCategory,
    MotionState,
    Tracklet,
    delta_expected,
    measured_confidence,
    new_tracklet,
    predict_pair,
    retire,
    update_tracklet,
)
from .task_model import PAIRS, Level, Pair

FEATURE_DIM = 16


@dataclass(frozen=True)
class ObjectTrack:
    """Ground truth for one object.

    ``waypoints`` are ``(frame, x, y, w, h)`` rows; state is linearly
    interpolated between them. The appearance feature rotates from ``feature``
    towards ``feature_ortho`` by ``drift`` radians per frame.
    """

    id: int
    enter: int
    exit: int
    waypoints: tuple
    feature: tuple
    feature_ortho: tuple
    drift: float
    occlusions: tuple = ()

    def present(self, frame: int) -> bool:
        return self.enter <= frame < self.exit

    def occluded(self, frame: int) -> bool:
        return any(a <= frame < b for a, b in self.occlusions)

    def state(self, frame: int) -> MotionState:
        wps = self.waypoints
        if frame <= wps[0][0]:
            seg = (wps[0], wps[1]) if len(wps) > 1 else (wps[0], wps[0])
        elif frame >= wps[-1][0]:
            seg = (wps[-2], wps[-1]) if len(wps) > 1 else (wps[-1], wps[-1])
        else:
            seg = next((a, b) for a, b in zip(wps, wps[1:]) if a[0] <= frame <= b[0])
        a, b = seg
        span = b[0] - a[0]
        if span == 0:
            return MotionState(a[1], a[2], a[3], a[4])
        vel = [(b[i] - a[i]) / span for i in range(1, 5)]
        u = frame - a[0]
        cur = [a[i] + vel[i - 1] * u for i in range(1, 5)]
        return MotionState(cur[0], cur[1], max(cur[2], 1.0), max(cur[3], 1.0), *vel)

    def appearance(self, frame: int) -> tuple:
        theta = self.drift * (frame - self.enter)
        c, s = math.cos(theta), math.sin(theta)
        return tuple(c * f + s * o for f, o in zip(self.feature, self.feature_ortho))

    def seen_appearance(self, frame: int, seed: int) -> tuple:
        """Feature found at the object's box: the true one when visible, mostly
        the occluder's while occluded, unrelated once the object has left."""
        if self.present(frame) and not self.occluded(frame):
            return self.appearance(frame)
        other = _unit(random.Random(f"clutter:{seed}:{self.id}:{frame}"), len(self.feature))
        if not self.present(frame):
            return tuple(other)
        mixed = [0.3 * a + 0.7 * b for a, b in zip(self.appearance(frame), other)]
        n = math.sqrt(sum(v * v for v in mixed))
        return tuple(v / n for v in mixed)


@dataclass(frozen=True)
class Scenario:
    width: int
    height: int
    roi_w: int
    roi_h: int
    horizon: int
    seed: int
    objects: dict  # task id -> tuple of ObjectTrack
    miss_prob: float = 0.0

    def objects_for(self, task_id: int) -> tuple:
        return self.objects.get(task_id, ())

    def to_json(self) -> str:
        data = asdict(self)
        data["objects"] = {str(k): [asdict(o) for o in v] for k, v in self.objects.items()}
        return json.dumps(data, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "Scenario":
        data = json.loads(text)

        def tup(x):
            return tuple(tup(v) for v in x) if isinstance(x, list) else x

        objects = {
            int(k): tuple(ObjectTrack(**{f: tup(val) for f, val in o.items()}) for o in v)
            for k, v in data.pop("objects").items()
        }
        return cls(objects=objects, **data)


@dataclass(frozen=True)
class ScenarioParams:
    n_objects: int = 8
    horizon: int = 300
    occlusion_rate: float = 0.01
    speed_min: float = 1.0
    speed_max: float = 8.0
    width: int = 768
    height: int = 768
    roi_w: int = 256
    roi_h: int = 256
    miss_prob: float = 0.0

    def validate(self):
        if self.n_objects < 0 or self.horizon <= 0:
            raise ValueError("n_objects must be >= 0 and horizon > 0")
        if not 0 <= self.occlusion_rate <= 1 or not 0 <= self.miss_prob <= 1:
            raise ValueError("rates must lie in [0, 1]")
        if not 0 <= self.speed_min <= self.speed_max:
            raise ValueError("invalid speed range")
        if self.roi_w <= 0 or self.roi_h <= 0 or self.roi_w > self.width or self.roi_h > self.height:
            raise ValueError("RoI must fit inside the frame")


def _unit(rng: random.Random, dim: int) -> list[float]:
    v = [rng.gauss(0.0, 1.0) for _ in range(dim)]
    n = math.sqrt(sum(x * x for x in v))
    return [x / n for x in v]


def _object(rng: random.Random, oid: int, p: ScenarioParams) -> ObjectTrack:
    # Most objects are present from the first frame; some enter or leave later.
    enter = 0 if rng.random() < 0.7 else rng.randrange(p.horizon)
    exit_ = p.horizon + 1 if rng.random() < 0.8 else rng.randint(enter + 1, p.horizon + 1)
    w, h = rng.uniform(24, 96), rng.uniform(24, 96)
    x, y = rng.uniform(w, p.width - w), rng.uniform(h, p.height - h)
    frame = enter
    wps = [(frame, x, y, w, h)]
    while frame < exit_:
        length = rng.randint(10, 60)
        speed = rng.uniform(p.speed_min, p.speed_max)
        heading = rng.uniform(0, 2 * math.pi)
        nx = min(max(x + math.cos(heading) * speed * length, w / 2), p.width - w / 2)
        ny = min(max(y + math.sin(heading) * speed * length, h / 2), p.height - h / 2)
        scale = rng.uniform(0.85, 1.15)
        nw = min(max(w * scale, 16.0), 160.0)
        nh = min(max(h * scale, 16.0), 160.0)
        frame += length
        x, y, w, h = nx, ny, nw, nh
        wps.append((frame, x, y, w, h))
    occl = []
    f = enter
    while f < exit_:
        if rng.random() < p.occlusion_rate:
            length = rng.randint(2, 6)
            occl.append((f, f + length))
            f += length + 1
        else:
            f += 1
    base = _unit(rng, FEATURE_DIM)
    other = _unit(rng, FEATURE_DIM)
    dot = sum(a * b for a, b in zip(base, other))
    ortho = [o - dot * b for o, b in zip(other, base)]
    n = math.sqrt(sum(v * v for v in ortho))
    ortho = [v / n for v in ortho]
    return ObjectTrack(
        id=oid, enter=enter, exit=exit_, waypoints=tuple(wps),
        feature=tuple(base), feature_ortho=tuple(ortho),
        drift=rng.uniform(0.005, 0.05), occlusions=tuple(occl),
    )


def generate_scenario(seed: int, params: ScenarioParams = ScenarioParams(),
                      task_ids=(0,)) -> Scenario:
    """Deterministic synthetic world; each task (camera) gets its own objects."""
    params.validate()
    objects = {}
    for tid in task_ids:
        rng = random.Random(f"scenario:{seed}:{tid}")
        objects[tid] = tuple(_object(rng, oid, params) for oid in range(params.n_objects))
    return Scenario(
        width=params.width, height=params.height, roi_w=params.roi_w, roi_h=params.roi_h,
        horizon=params.horizon, seed=seed, objects=objects, miss_prob=params.miss_prob,
    )


# --- RoI --------------------------------------------------------------------


def roi_windows(width: int, height: int, roi_w: int, roi_h: int) -> list[tuple[int, int, int, int]]:
    """Non-overlapping grid of RoI-sized windows, row-major from the origin."""
    return [
        (x, y, roi_w, roi_h)
        for y in range(0, max(height // roi_h, 1) * roi_h, roi_h)
        for x in range(0, max(width // roi_w, 1) * roi_w, roi_w)
    ]


def _inside(window, px: float, py: float) -> bool:
    x, y, w, h = window
    return x <= px < x + w and y <= py < y + h


def select_roi(tracklets, frame: int, geometry) -> tuple[int, int, int, int]:
    """Window whose tracklets have the lowest mean confidence.

    ``geometry`` is ``(width, height, roi_w, roi_h)``. Windows without any
    tracklet are not candidates. With no candidate at all the windows are
    scanned row-major by frame index, so frame 0 gets the origin window.
    """
    windows = roi_windows(*geometry)
    best, best_key = windows[frame % len(windows)], None
    positions = [(chi.position_at(frame), chi.omega) for chi in tracklets]
    for win in windows:
        omegas = [om for (px, py), om in positions if _inside(win, px, py)]
        if not omegas:
            continue
        key = (sum(omegas) / len(omegas), win[0], win[1])
        if best_key is None or key < best_key:
            best, best_key = win, key
    return best


def roi_members(tracklets, roi, frame: int) -> frozenset:
    return frozenset(chi.id for chi in tracklets if _inside(roi, *chi.position_at(frame)))


# --- pipeline ---------------------------------------------------------------


@dataclass
class FrameOutcome:
    frame: int
    pair: Pair
    roi: tuple
    categories: dict = field(default_factory=dict)  # tracklet id -> MatchCategory
    observations: dict = field(default_factory=dict)  # tracklet id -> (MotionState, appearance)
    seen: dict = field(default_factory=dict)  # tracklet id -> feature at the track's box
    new_objects: list = field(default_factory=list)  # (object id, MotionState, appearance)


def _detected(obj: ObjectTrack, frame: int, pair: Pair, roi, scenario: Scenario, task_id: int) -> bool:
    if not obj.present(frame) or obj.occluded(frame):
        return False
    if pair.detection is Level.H:
        return True
    m = obj.state(frame)
    if not _inside(roi, m.x, m.y):
        return False
    if scenario.miss_prob > 0:
        rng = random.Random(f"miss:{scenario.seed}:{task_id}:{frame}:{obj.id}")
        if rng.random() < scenario.miss_prob:
            return False
    return True


def execute_pipeline(task_id: int, pair: Pair, frame: int, scenario: Scenario,
                     tracklets, roi: Optional[tuple] = None) -> FrameOutcome:
    if not 0 <= frame <= scenario.horizon:
        raise ValueError(f"frame {frame} outside scenario horizon {scenario.horizon}")
    if roi is None:
        roi = select_roi(tracklets, frame, (scenario.width, scenario.height, scenario.roi_w, scenario.roi_h))
    by_object = {chi.object_id: chi for chi in tracklets}
    out = FrameOutcome(frame=frame, pair=pair, roi=roi)
    objects = {obj.id: obj for obj in scenario.objects_for(task_id)}
    for chi in tracklets:
        out.categories[chi.id] = MatchCategory.CG3
        obj = objects.get(chi.object_id)
        if obj is not None:
            out.seen[chi.id] = obj.seen_appearance(frame, scenario.seed)
    for obj in scenario.objects_for(task_id):
        if not _detected(obj, frame, pair, roi, scenario, task_id):
            continue
        state, feat = obj.state(frame), obj.appearance(frame)
        chi = by_object.get(obj.id)
        if chi is None:
            out.new_objects.append((obj.id, state, feat))
            continue
        matched = MatchCategory.CG1 if pair.association is Level.H else MatchCategory.CG2
        out.categories[chi.id] = matched
        out.observations[chi.id] = (state, feat)
    return out


def apply_outcome(tracklets, outcome: FrameOutcome, next_id: int) -> tuple[list[Tracklet], int]:
    updated = []
    for chi in tracklets:
        obs = outcome.observations.get(chi.id)
        motion, feat = obs if obs else (None, outcome.seen.get(chi.id))
        updated.append(update_tracklet(chi, outcome.categories[chi.id], outcome.frame, motion, feat))
    for oid, state, feat in outcome.new_objects:
        updated.append(new_tracklet(next_id, outcome.frame, state, feat, object_id=oid))
        next_id += 1
    return retire(updated), next_id


class TaskPipeline:
    """Per-task tracking state owned by one simulation."""

    def __init__(self, task_id: int, scenario: Scenario):
        self.task_id = task_id
        self.scenario = scenario
        self.tracklets: list[Tracklet] = []
        self._next_id = 0
        self._cache = None

    @property
    def geometry(self):
        s = self.scenario
        return s.width, s.height, s.roi_w, s.roi_h

    def measured(self) -> float:
        return measured_confidence(self.tracklets)

    def _prepare(self, frame: int):
        if self._cache is None or self._cache[0] != frame:
            roi = select_roi(self.tracklets, frame, self.geometry)
            members = roi_members(self.tracklets, roi, frame)
            gains = {p: delta_expected(self.tracklets, p, members) for p in PAIRS}
            self._cache = (frame, roi, members, gains)
        return self._cache

    def gains(self, frame: int) -> dict:
        """Expected confidence change per pair for the given frame."""
        return self._prepare(frame)[3]

    def predicted(self, frame: int) -> dict:
        _, _, members, _ = self._prepare(frame)
        return {p: predict_pair(self.tracklets, p, members) for p in PAIRS}

    def run(self, pair: Pair, frame: int) -> FrameOutcome:
        _, roi, _, _ = self._prepare(frame)
        outcome = execute_pipeline(self.task_id, pair, frame, self.scenario, self.tracklets, roi)
        self.tracklets, self._next_id = apply_outcome(self.tracklets, outcome, self._next_id)
        self._cache = None
        return outcome
