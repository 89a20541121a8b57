"""Moving-object detection: differencing, FAST/BRIEF features, sparse LK, per-ROI voting."""

from .features import FeaturePoint, compute_brief, detect_keypoints, hamming, smooth_for_brief
from .lk import TrackResult, TrackStatus, lk_track, lk_track_arrays
from .mask import MotionMask, dilate_mask, frame_diff, mask_apply
from .motion import (
    DETECT_STAGES,
    RoiMotion,
    aggregate_roi,
    detect_frame,
    frame_pyramid,
)
from .params import DetectParams

__all__ = [
    "DETECT_STAGES", "DetectParams", "FeaturePoint", "MotionMask", "RoiMotion", "TrackResult",
    "TrackStatus", "aggregate_roi", "compute_brief", "detect_frame", "detect_keypoints",
    "dilate_mask", "frame_diff", "frame_pyramid", "hamming", "lk_track", "lk_track_arrays",
    "mask_apply", "smooth_for_brief",
]
