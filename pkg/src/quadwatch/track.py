"""Stopped-object latch.

Once an ROI fires, the converged endpoints of its tracks are kept. When the
detector later goes quiet in that ROI the stored points are re-tracked with a
forward-backward check; if enough of them survive and barely move, the ROI is
held as occupied (``STOPPED_LATCHED``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .detect.features import FeaturePoint
from .detect.lk import CONVERGED, TrackResult, TrackStatus, lk_track_arrays
from .detect.motion import RoiMotion
from .detect.params import DetectParams
from .imgcore import Pyramid
from .roi import N_ROIS, RoiConfig
from .verdict import FrameVerdict, RoiMode


@dataclass(frozen=True)
class TrackParams:
    latch_motion_max: float = 1.5
    latch_min_survivors: float = 0.5
    fb_error_max: float = 1.0
    # keep the latch until the detector fires again, without re-verification
    strict_paper: bool = False

    def __post_init__(self):
        for name in ("latch_motion_max", "latch_min_survivors", "fb_error_max"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class RoiState:
    roi_index: int
    mode: RoiMode = RoiMode.EMPTY
    stored_points: tuple[FeaturePoint, ...] = ()
    last_positive_frame: int = -1

    def __post_init__(self):
        if bool(self.stored_points) != (self.mode is not RoiMode.EMPTY):
            raise ValueError(f"ROI {self.roi_index}: stored points must be present iff mode != empty")


@dataclass(frozen=True)
class Transition:
    frame: int
    roi: int
    old_mode: RoiMode
    new_mode: RoiMode
    survivors: int
    resultant: float


def initial_states() -> list[RoiState]:
    return [RoiState(k) for k in range(N_ROIS)]


@dataclass(frozen=True)
class LatchCheck:
    survivors: tuple[FeaturePoint, ...]
    fraction: float
    resultant: tuple[float, float]

    def passes(self, params: TrackParams) -> bool:
        return (
            bool(self.survivors)
            and self.fraction >= params.latch_min_survivors
            and math.hypot(*self.resultant) <= params.latch_motion_max
        )


def verify_points(points: Sequence[FeaturePoint], prev_pyr: Pyramid, cur_pyr: Pyramid,
                  params: TrackParams, detect_params: DetectParams) -> LatchCheck:
    """Forward-backward re-track of stored points; survivors carry their new positions."""
    if not points:
        return LatchCheck((), 0.0, (0.0, 0.0))
    xy = np.array([(p.x, p.y) for p in points])
    fwd, st_f, _ = lk_track_arrays(prev_pyr, cur_pyr, xy, detect_params)
    back, st_b, _ = lk_track_arrays(cur_pyr, prev_pyr, fwd, detect_params)
    fb = np.hypot(*(back - xy).T)
    alive = (st_f == CONVERGED) & (st_b == CONVERGED) & (fb < params.fb_error_max)
    idx = np.flatnonzero(alive)
    survivors = tuple(replace(points[i], x=float(fwd[i, 0]), y=float(fwd[i, 1])) for i in idx)
    disp = fwd[idx] - xy[idx]
    resultant = (math.fsum(disp[:, 0]), math.fsum(disp[:, 1]))
    return LatchCheck(survivors, len(idx) / len(points), resultant)


def _stored_from_tracks(tracks: Sequence[TrackResult], owner: np.ndarray, roi: int) -> tuple[FeaturePoint, ...]:
    return tuple(
        replace(t.origin, x=t.tracked_x, y=t.tracked_y)
        for t, k in zip(tracks, owner)
        if k == roi and t.status is TrackStatus.CONVERGED
    )


def update_tracking(
    states: Sequence[RoiState],
    motions: Sequence[RoiMotion],
    tracks: Sequence[TrackResult],
    prev_pyr: Pyramid | None,
    cur_pyr: Pyramid | None,
    params: TrackParams | None = None,
    *,
    config: RoiConfig,
    frame_index: int,
    detect_params: DetectParams | None = None,
    log: list[Transition] | None = None,
) -> list[RoiState]:
    """Advance every ROI's latch state by one frame pair."""
    params = params or TrackParams()
    detect_params = detect_params or DetectParams()
    if len(states) != N_ROIS or len(motions) != N_ROIS:
        raise ValueError(f"expected {N_ROIS} states and motions, got {len(states)} and {len(motions)}")
    for k, (s, m) in enumerate(zip(states, motions)):
        if s.roi_index != k or m.roi_index != k:
            raise ValueError(f"states/motions misaligned at position {k}")
    owner = config.locate([t.origin.x for t in tracks], [t.origin.y for t in tracks]) if tracks else np.zeros(0)

    out = []
    for state, motion in zip(states, motions):
        k = state.roi_index
        survivors = 0
        resultant = 0.0
        if motion.active:
            stored = _stored_from_tracks(tracks, owner, k)
            new = RoiState(k, RoiMode.MOVING, stored, frame_index) if stored else RoiState(k)
            survivors = len(stored)
            resultant = motion.magnitude
        elif state.mode is RoiMode.EMPTY:
            new = state
        elif state.mode is RoiMode.STOPPED_LATCHED and params.strict_paper:
            new = state
        else:
            check = verify_points(state.stored_points, prev_pyr, cur_pyr, params, detect_params)
            survivors = len(check.survivors)
            resultant = math.hypot(*check.resultant)
            if check.passes(params):
                new = RoiState(k, RoiMode.STOPPED_LATCHED, check.survivors, state.last_positive_frame)
            else:
                new = RoiState(k)
        if log is not None and new.mode is not state.mode:
            log.append(Transition(frame_index, k, state.mode, new.mode, survivors, resultant))
        out.append(new)
    return out


def roi_verdict(states: Sequence[RoiState], motions: Sequence[RoiMotion] = (),
                frame_index: int = 0) -> FrameVerdict:
    """Occupied ROIs are those Moving or StoppedLatched."""
    if motions and len(motions) != len(states):
        raise ValueError("states and motions must be aligned")
    occupied = {s.roi_index: s.mode for s in states if s.mode is not RoiMode.EMPTY}
    return FrameVerdict(frame_index, occupied)


def motion_verdict(motions: Sequence[RoiMotion], frame_index: int = 0) -> FrameVerdict:
    """Verdict with tracking disabled: only currently active ROIs."""
    return FrameVerdict(frame_index, {m.roi_index: RoiMode.MOVING for m in motions if m.active})
