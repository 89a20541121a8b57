"""Quad-view surround monitoring: motion detection, stopped-object latching and ROI classification."""

from .detect import DetectParams, detect_frame
from .evaluation import ConfusionCounts, EvalReport, class_accuracy, run_experiment, score
from .imgcore import GrayImage, QuadFrame, iter_sequence, merge_quad, split_quad
from .pipeline import Mode, MovingObjectDetector, benchmark, run_pipeline
from .roi import RoiConfig, default_config, load_roi_config
from .track import TrackParams, update_tracking
from .verdict import FrameVerdict, RoiMode
from .wire import decode_message, encode_message

__version__ = "0.1.0"

__all__ = [
    "ConfusionCounts", "DetectParams", "EvalReport", "FrameVerdict", "GrayImage", "Mode",
    "MovingObjectDetector", "QuadFrame", "RoiConfig", "RoiMode", "TrackParams", "benchmark",
    "class_accuracy", "decode_message", "default_config", "detect_frame", "encode_message",
    "iter_sequence", "load_roi_config", "merge_quad", "run_experiment", "run_pipeline", "score",
    "split_quad", "update_tracking",
]
