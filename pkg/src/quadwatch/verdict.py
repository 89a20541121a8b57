from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum


class RoiMode(str, Enum):
    EMPTY = "empty"
    MOVING = "moving"
    STOPPED_LATCHED = "latched"


@dataclass(frozen=True)
class FrameVerdict:
    """Per-frame ROI occupancy, with optional ``roi -> (class_id, confidence)`` labels."""

    frame_index: int
    occupied: dict[int, RoiMode] = field(default_factory=dict)
    labels: dict[int, tuple[int, float]] = field(default_factory=dict)

    def __post_init__(self):
        for roi, mode in self.occupied.items():
            if mode not in (RoiMode.MOVING, RoiMode.STOPPED_LATCHED):
                raise ValueError(f"ROI {roi}: occupied mode must be moving or latched, got {mode}")

    @property
    def occupied_set(self) -> frozenset[int]:
        return frozenset(self.occupied)

    def with_labels(self, labels: dict[int, tuple[int, float]]) -> "FrameVerdict":
        return FrameVerdict(self.frame_index, dict(self.occupied), dict(labels))
