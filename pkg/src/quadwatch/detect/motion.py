"""Per-ROI resultant motion and the composed per-frame detector."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..imgcore import Pyramid, QuadFrame, build_pyramid
from ..roi import N_ROIS, RoiConfig
from ..timing import NullTimer
from .features import FeaturePoint, detect_keypoints, with_descriptors
from .lk import STATUS_BY_CODE, TrackResult, TrackStatus, lk_track_arrays
from .mask import MotionMask, dilate_mask, frame_diff, mask_apply
from .params import DetectParams

STAGE_DIFF = "Diff of two frames"
STAGE_MASK = "Wise multiple"
STAGE_FEATURES = "ORB Feature Extraction"
STAGE_FLOW = "Sparse Optical flow cal."
DETECT_STAGES = (STAGE_DIFF, STAGE_MASK, STAGE_FEATURES, STAGE_FLOW)


@dataclass(frozen=True)
class RoiMotion:
    roi_index: int
    resultant: tuple[float, float]
    feature_count: int
    active: bool

    @property
    def magnitude(self) -> float:
        return math.hypot(*self.resultant)


def motion_is_active(resultant, count: int, params: DetectParams) -> bool:
    if count < params.min_features:
        return False
    length = math.hypot(*resultant)
    if params.motion_normalize:
        length /= count
    return length >= params.motion_threshold


def aggregate_roi(tracks: Sequence[TrackResult], config: RoiConfig, params: DetectParams) -> list[RoiMotion]:
    """Sum converged displacement vectors per ROI, binned by track origin.

    Sums are exactly rounded (``math.fsum``), so the result does not depend on
    track order.
    """
    dx: list[list[float]] = [[] for _ in range(N_ROIS)]
    dy: list[list[float]] = [[] for _ in range(N_ROIS)]
    good = [t for t in tracks if t.status is TrackStatus.CONVERGED]
    if good:
        owner = config.locate([t.origin.x for t in good], [t.origin.y for t in good])
        for t, k in zip(good, owner):
            if k >= 0:
                dx[k].append(t.dx)
                dy[k].append(t.dy)
    out = []
    for k in range(N_ROIS):
        res = (math.fsum(dx[k]), math.fsum(dy[k]))
        out.append(RoiMotion(k, res, len(dx[k]), motion_is_active(res, len(dx[k]), params)))
    return out


def frame_pyramid(frame: QuadFrame, params: DetectParams) -> Pyramid:
    return build_pyramid(frame.image, params.lk_levels)


def detect_frame(
    prev: QuadFrame,
    cur: QuadFrame,
    config: RoiConfig,
    params: DetectParams | None = None,
    *,
    prev_pyr: Pyramid | None = None,
    cur_pyr: Pyramid | None = None,
    descriptors: bool = False,
    n_jobs: int = 1,
    timer=None,
    debug: dict | None = None,
) -> tuple[list[RoiMotion], list[TrackResult]]:
    """Difference, mask, extract per-ROI keypoints, track them, aggregate.

    Pyramids may be supplied to reuse work across consecutive pairs. When
    ``debug`` is a dict it receives the dilated mask under ``"mask"``.
    """
    params = params or DetectParams()
    timer = timer or NullTimer()
    if (prev.width, prev.height) != (config.frame_width, config.frame_height):
        raise ValueError(
            f"frame {prev.width}x{prev.height} does not match ROI config "
            f"{config.frame_width}x{config.frame_height}"
        )
    with timer.stage(STAGE_DIFF):
        mask = frame_diff(prev.image, cur.image, params.diff_threshold)
        mask = dilate_mask(mask, params.mask_dilation_radius)
    with timer.stage(STAGE_MASK):
        masked = mask_apply(prev.image, mask)
    if debug is not None:
        debug["mask"] = mask

    with timer.stage(STAGE_FEATURES):
        if n_jobs > 1:
            with ThreadPoolExecutor(max_workers=n_jobs) as pool:
                per_roi = list(pool.map(lambda r: detect_keypoints(masked, mask, r, params), config.rois))
        else:
            per_roi = [detect_keypoints(masked, mask, r, params) for r in config.rois]
        points: list[FeaturePoint] = [p for pts in per_roi for p in pts]
        if descriptors:
            points = with_descriptors(prev.image, points)

    with timer.stage(STAGE_FLOW):
        if not points:
            return aggregate_roi([], config, params), []
        if prev_pyr is None:
            prev_pyr = frame_pyramid(prev, params)
        if cur_pyr is None:
            cur_pyr = frame_pyramid(cur, params)
        xy = np.array([(p.x, p.y) for p in points])
        tracked, status, residual = lk_track_arrays(prev_pyr, cur_pyr, xy, params)
        tracks = [
            TrackResult(pt, float(t[0]), float(t[1]), STATUS_BY_CODE[s], float(r))
            for pt, t, s, r in zip(points, tracked, status, residual)
        ]
        motions = aggregate_roi(tracks, config, params)
    return motions, tracks


def empty_mask_like(frame: QuadFrame) -> MotionMask:
    return MotionMask(np.zeros((frame.height, frame.width), dtype=bool))
