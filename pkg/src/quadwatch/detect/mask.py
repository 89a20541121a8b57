"""Adjacent-frame differencing and binary mask helpers."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from ..imgcore import GrayImage


@dataclass(frozen=True, eq=False)
class MotionMask:
    """Per-pixel motion flags, shape (height, width), read-only bool array."""

    flags: np.ndarray

    def __post_init__(self):
        arr = np.array(self.flags, dtype=bool)
        arr.flags.writeable = False
        object.__setattr__(self, "flags", arr)

    @property
    def width(self) -> int:
        return self.flags.shape[1]

    @property
    def height(self) -> int:
        return self.flags.shape[0]

    def __eq__(self, other):
        if not isinstance(other, MotionMask):
            return NotImplemented
        return np.array_equal(self.flags, other.flags)

    def count(self) -> int:
        return int(self.flags.sum())

    def to_image(self) -> GrayImage:
        return GrayImage(self.flags.astype(np.uint8) * 255)


def _check_same(a_shape, b_shape, what: str):
    if a_shape != b_shape:
        raise ValueError(f"{what}: dimension mismatch {a_shape[::-1]} vs {b_shape[::-1]}")


def frame_diff(prev: GrayImage, cur: GrayImage, diff_threshold: int = 25) -> MotionMask:
    """Set where |cur - prev| strictly exceeds the threshold."""
    _check_same(prev.pixels.shape, cur.pixels.shape, "frame_diff")
    diff = np.abs(cur.pixels.astype(np.int16) - prev.pixels.astype(np.int16))
    return MotionMask(diff > diff_threshold)


def dilate_mask(mask: MotionMask, radius: int) -> MotionMask:
    """Square dilation of half-width ``radius``; pixels beyond the border count as unset."""
    if radius < 0:
        raise ValueError("radius must be >= 0")
    if radius == 0:
        return mask
    grown = ndimage.maximum_filter(
        mask.flags.view(np.uint8), size=2 * radius + 1, mode="constant", cval=0
    )
    return MotionMask(grown.astype(bool))


def mask_apply(img: GrayImage, mask: MotionMask) -> GrayImage:
    """Element-wise product of image and mask."""
    _check_same(img.pixels.shape, mask.flags.shape, "mask_apply")
    return GrayImage(img.pixels * mask.flags)
