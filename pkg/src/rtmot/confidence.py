"""Tracklet confidence: per-frame update rules and next-frame prediction."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from functools import cached_property
from typing import Collection, Iterable, Optional

import numpy as np

from .task_model import Level, Pair

# Stand-in ratio for a zero velocity sum with non-zero change; saturates the sigmoid.
DEGENERATE_RATIO = 50.0
RETIRE_THRESHOLD = 0.01
RETIRE_FRAMES = 30


class MatchCategory(str, enum.Enum):
    CG1 = "CG1"  # matched by feature + IoU association
    CG2 = "CG2"  # matched by IoU-only association
    CG3 = "CG3"  # unmatched


@dataclass(frozen=True)
class MotionState:
    x: float
    y: float
    w: float
    h: float
    vx: float = 0.0
    vy: float = 0.0
    vw: float = 0.0
    vh: float = 0.0

    def __post_init__(self):
        if not (self.w > 0 and self.h > 0):
            raise ValueError(f"box size must be positive, got ({self.w}, {self.h})")

    def coast(self, frames: int) -> "MotionState":
        """Constant-velocity extrapolation, sizes kept positive."""
        if frames == 0:
            return self
        return replace(
            self,
            x=self.x + self.vx * frames,
            y=self.y + self.vy * frames,
            w=max(self.w + self.vw * frames, 1.0),
            h=max(self.h + self.vh * frames, 1.0),
        )


def _clamp01(x: float) -> float:
    return min(1.0, max(0.0, x))


def _sigmoid(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


def lambda_s(prev: MotionState, cur: MotionState) -> float:
    """Size-variation score; 0.5 for no change, towards 0 when shrinking."""
    for m in (prev, cur):
        if not (m.w > 0 and m.h > 0):
            raise ValueError("box size must be positive")
    dh = (prev.h - cur.h) / (prev.h + cur.h)
    dw = (prev.w - cur.w) / (prev.w + cur.w)
    return _clamp01(-0.25 * (dh + dw) + 0.5)


def _velocity_ratio(a: float, b: float) -> float:
    s = a + b
    d = a - b
    if s == 0:
        if d == 0:
            return 0.0
        return math.copysign(DEGENERATE_RATIO, d)
    return d / s


def lambda_v(prev: MotionState, cur: MotionState) -> float:
    """Velocity-variation score; 1 for unchanged velocity."""
    z = _velocity_ratio(prev.vx, cur.vx) + _velocity_ratio(prev.vy, cur.vy)
    return _clamp01(1.0 - 2.0 * abs(_sigmoid(z) - 0.5))


def lambda_a(prev, cur) -> float:
    """Cosine similarity of two appearance features, negatives clamped to 0."""
    a = np.asarray(prev, dtype=float)
    b = np.asarray(cur, dtype=float)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ValueError("appearance feature has zero norm")
    return _clamp01(float(np.dot(a, b) / (na * nb)))


@dataclass(frozen=True)
class Tracklet:
    """One object's track and its motion/appearance confidence.

    ``motion`` is the latest observed motion state and ``motion_prev`` the
    observation before it. ``appearance`` is the feature seen at the track's
    box on the latest processed frame; ``appearance_update`` is the feature
    stored at the last feature-based match (or creation) and
    ``appearance_ref`` the stored feature before that.
    """

    id: int
    start: int
    last_seen: int
    motion: MotionState
    motion_frame: int
    appearance: tuple
    appearance_frame: int
    appearance_update: tuple
    appearance_update_frame: int
    omega_m: float = 1.0
    omega_a: float = 1.0
    motion_prev: Optional[MotionState] = None
    appearance_ref: Optional[tuple] = None
    object_id: Optional[int] = None
    low_frames: int = 0

    @property
    def omega(self) -> float:
        return self.omega_m * self.omega_a

    @cached_property
    def motion_decay(self) -> float:
        ref = self.motion_prev if self.motion_prev is not None else self.motion
        return lambda_s(ref, self.motion) * lambda_v(ref, self.motion)

    @cached_property
    def appearance_decay(self) -> float:
        if self.appearance_frame > self.appearance_update_frame:
            ref = self.appearance_update
        else:
            ref = self.appearance_ref if self.appearance_ref is not None else self.appearance
        return lambda_a(ref, self.appearance)

    def position_at(self, frame: int) -> tuple[float, float]:
        m = self.motion.coast(max(frame - self.motion_frame, 0))
        return m.x, m.y


def _feature(v) -> tuple:
    return tuple(float(x) for x in v)


def new_tracklet(tid: int, frame: int, motion: MotionState, appearance, object_id=None) -> Tracklet:
    feat = _feature(appearance)
    return Tracklet(
        id=tid, start=frame, last_seen=frame,
        motion=motion, motion_frame=frame,
        appearance=feat, appearance_frame=frame,
        appearance_update=feat, appearance_update_frame=frame,
        object_id=object_id,
    )


def update_tracklet(chi: Tracklet, category: MatchCategory, frame: int,
                    motion: Optional[MotionState] = None, appearance=None) -> Tracklet:
    """Apply one frame's outcome; returns a new tracklet.

    For CG2/CG3 ``appearance`` is the feature currently seen at the track's
    box; it never replaces the stored (matched) feature.
    """
    category = MatchCategory(category)
    if category is MatchCategory.CG1:
        if motion is None or appearance is None:
            raise ValueError("CG1 needs an observed motion and appearance state")
        feat = _feature(appearance)
        return replace(
            chi, omega_m=1.0, omega_a=1.0, last_seen=frame,
            motion_prev=chi.motion, motion=motion, motion_frame=frame,
            appearance=feat, appearance_frame=frame,
            appearance_ref=chi.appearance_update,
            appearance_update=feat, appearance_update_frame=frame,
        )
    seen = {}
    if appearance is not None:
        seen = dict(appearance=_feature(appearance), appearance_frame=frame)
    if category is MatchCategory.CG2:
        if motion is None:
            raise ValueError("CG2 needs an observed motion state")
        return replace(
            chi, omega_m=1.0, omega_a=max(chi.omega_a * chi.appearance_decay, 0.0),
            last_seen=frame, motion_prev=chi.motion, motion=motion, motion_frame=frame, **seen,
        )
    return replace(
        chi,
        omega_m=max(chi.omega_m * chi.motion_decay, 0.0),
        omega_a=max(chi.omega_a * chi.appearance_decay, 0.0),
        **seen,
    )


def hypothetical_omega(chi: Tracklet, category: MatchCategory) -> float:
    """Ω the tracklet would have after ``category``, without building new states."""
    if category is MatchCategory.CG1:
        return 1.0
    omega_a = max(chi.omega_a * chi.appearance_decay, 0.0)
    if category is MatchCategory.CG2:
        return omega_a
    return max(chi.omega_m * chi.motion_decay, 0.0) * omega_a


def measured_confidence(tracklets: Iterable[Tracklet]) -> float:
    omegas = [chi.omega for chi in tracklets]
    if not omegas:
        return 0.0
    return sum(omegas) / len(omegas)


def assumed_category(pair: Pair, in_roi: bool) -> MatchCategory:
    if pair.detection is Level.L and not in_roi:
        return MatchCategory.CG3
    return MatchCategory.CG1 if pair.association is Level.H else MatchCategory.CG2


def predict_pair(tracklets: Iterable[Tracklet], pair: Pair,
                 roi_members: Collection[int] = ()) -> float:
    """Expected task confidence on the next frame if it runs ``pair``.

    ``roi_members`` holds the ids of tracklets inside the RoI; it only matters
    for low-confidence detection. New tracklets are not anticipated.
    """
    tracklets = list(tracklets)
    if not tracklets:
        return 0.0
    total = 0.0
    for chi in tracklets:
        total += hypothetical_omega(chi, assumed_category(pair, chi.id in roi_members))
    return total / len(tracklets)


def delta_expected(tracklets: Iterable[Tracklet], pair: Pair,
                   roi_members: Collection[int] = ()) -> float:
    tracklets = list(tracklets)
    return predict_pair(tracklets, pair, roi_members) - measured_confidence(tracklets)


@dataclass(frozen=True)
class AssociationResult:
    matched: bool
    feature_match: bool = False


def classify_outcome(chi: Tracklet, result: AssociationResult) -> MatchCategory:
    if not result.matched:
        return MatchCategory.CG3
    return MatchCategory.CG1 if result.feature_match else MatchCategory.CG2


def retire(tracklets: Iterable[Tracklet]) -> list[Tracklet]:
    """Advance the low-confidence counters and drop long-dead tracklets."""
    kept = []
    for chi in tracklets:
        low = chi.low_frames + 1 if chi.omega < RETIRE_THRESHOLD else 0
        if low >= RETIRE_FRAMES:
            continue
        kept.append(chi if low == chi.low_frames else replace(chi, low_frames=low))
    return kept
