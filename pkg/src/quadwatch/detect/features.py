"""Oriented FAST-9 keypoints and steered BRIEF descriptors."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from ..imgcore import FloatImage, GrayImage
from ..roi import Roi
from .mask import MotionMask
from .params import DetectParams

# Bresenham circle of radius 3, clockwise from 12 o'clock.
CIRCLE = np.array([
    (0, -3), (1, -3), (2, -2), (3, -1), (3, 0), (3, 1), (2, 2), (1, 3),
    (0, 3), (-1, 3), (-2, 2), (-3, 1), (-3, 0), (-3, -1), (-2, -2), (-1, -3),
])
ARC_LENGTH = 9
ORIENT_RADIUS = 15
BRIEF_BITS = 256
BRIEF_SEED = 0x0B81EF
BRIEF_RADIUS = 15
BRIEF_BORDER = 16
BRIEF_SMOOTH_SIGMA = 2.0


@dataclass(frozen=True)
class FeaturePoint:
    x: float
    y: float
    score: float = 0.0
    angle: float = 0.0
    descriptor: bytes | None = None


def _disc_offsets(radius: int) -> np.ndarray:
    r = np.arange(-radius, radius + 1)
    dx, dy = np.meshgrid(r, r)
    keep = dx * dx + dy * dy <= radius * radius
    return np.stack([dx[keep], dy[keep]], axis=1)


_DISC = _disc_offsets(ORIENT_RADIUS)


def _brief_pattern(seed: int = BRIEF_SEED) -> np.ndarray:
    """256 point pairs, isotropic Gaussian (sigma = 31/5) restricted to a radius-15 disc."""
    rng = np.random.default_rng(seed)
    pts = []
    while len(pts) < 2 * BRIEF_BITS:
        cand = rng.normal(0.0, 31 / 5, size=2)
        if cand @ cand <= BRIEF_RADIUS**2:
            pts.append(cand)
    return np.asarray(pts).reshape(BRIEF_BITS, 2, 2)


BRIEF_PATTERN = _brief_pattern()


def fast_corners(arr: np.ndarray, candidates: np.ndarray, threshold: int) -> tuple[np.ndarray, np.ndarray]:
    """Segment test at the flat ``candidates`` indices of ``arr``.

    Returns the indices passing FAST-9 and their scores (the larger of the bright
    and dark sums of threshold exceedances). Candidates must be >= 3 px from
    every border.
    """
    h, w = arr.shape
    flat = arr.ravel().astype(np.int16)
    if candidates.size == 0:
        return candidates, np.zeros(0)
    offs = CIRCLE[:, 1] * w + CIRCLE[:, 0]
    p = flat[candidates]
    # Any 9-arc covers at least two of the four compass pixels.
    compass = flat[candidates[:, None] + offs[[0, 4, 8, 12]]]
    quick = ((compass > (p + threshold)[:, None]).sum(1) >= 2) | (
        (compass < (p - threshold)[:, None]).sum(1) >= 2)
    candidates, p = candidates[quick], p[quick]
    if candidates.size == 0:
        return candidates, np.zeros(0)
    ring = flat[candidates[:, None] + offs]
    delta = ring - p[:, None]
    bright = delta > threshold
    dark = delta < -threshold

    def has_arc(flags):
        twice = np.concatenate([flags, flags[:, : ARC_LENGTH - 1]], axis=1).astype(np.int8)
        cs = np.concatenate([np.zeros((len(flags), 1), np.int16), np.cumsum(twice, 1, dtype=np.int16)], 1)
        return ((cs[:, ARC_LENGTH:] - cs[:, : -ARC_LENGTH]) == ARC_LENGTH).any(1)

    ok = has_arc(bright) | has_arc(dark)
    excess = np.abs(delta) - threshold
    score = np.maximum(np.where(bright, excess, 0).sum(1), np.where(dark, excess, 0).sum(1))
    return candidates[ok], score[ok].astype(np.float64)


def orientation(arr: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Intensity-centroid angle over a radius-15 disc; pixels outside the raster are skipped."""
    if len(xs) == 0:
        return np.zeros(0)
    xs = np.asarray(xs, dtype=np.intp)
    ys = np.asarray(ys, dtype=np.intp)
    # zero padding == skipping out-of-raster pixels for moment sums
    r = ORIENT_RADIUS
    x0, y0 = int(xs.min()) - r, int(ys.min()) - r
    x1, y1 = int(xs.max()) + r + 1, int(ys.max()) + r + 1
    h, w = arr.shape
    pad = np.zeros((y1 - y0, x1 - x0))
    sy0, sx0 = max(y0, 0), max(x0, 0)
    sy1, sx1 = min(y1, h), min(x1, w)
    pad[sy0 - y0 : sy1 - y0, sx0 - x0 : sx1 - x0] = arr[sy0:sy1, sx0:sx1]
    xi = xs[:, None] + _DISC[:, 0] - x0
    yi = ys[:, None] + _DISC[:, 1] - y0
    vals = pad[yi, xi]
    m10 = vals @ _DISC[:, 0].astype(np.float64)
    m01 = vals @ _DISC[:, 1].astype(np.float64)
    return np.arctan2(m01, m10)


def detect_keypoints(img: GrayImage, mask: MotionMask, roi: Roi, params: DetectParams) -> list[FeaturePoint]:
    """FAST-9 corners on masked pixels of one ROI, 3x3 NMS, strongest first."""
    arr = img.pixels
    h, w = arr.shape
    # candidate window: ROI clipped 3 px from the image border for the circle test
    x0, x1 = max(roi.x, 3), min(roi.x + roi.w, w - 3)
    y0, y1 = max(roi.y, 3), min(roi.y + roi.h, h - 3)
    if x0 >= x1 or y0 >= y1:
        return []
    sub = mask.flags[y0:y1, x0:x1]
    ys, xs = np.nonzero(sub)
    if ys.size == 0:
        return []
    ys = ys + y0
    xs = xs + x0
    idx, score = fast_corners(arr, ys * w + xs, params.fast_threshold)
    if idx.size == 0:
        return []
    cy, cx = np.divmod(idx, w)
    # 3x3 non-maximum suppression inside the candidate window
    smap = np.zeros((y1 - y0 + 2, x1 - x0 + 2))
    smap[cy - y0 + 1, cx - x0 + 1] = score
    peak = ndimage.maximum_filter(smap, size=3, mode="constant")
    keep = score >= peak[cy - y0 + 1, cx - x0 + 1]
    cx, cy, score = cx[keep], cy[keep], score[keep]
    order = np.lexsort((cx, cy, -score))[: params.max_features_per_roi]
    cx, cy, score = cx[order], cy[order], score[order]
    angles = orientation(arr, cx, cy)
    return [
        FeaturePoint(float(x), float(y), float(s), float(a))
        for x, y, s, a in zip(cx, cy, score, angles)
    ]


def smooth_for_brief(arr: np.ndarray) -> FloatImage:
    return FloatImage(ndimage.gaussian_filter(np.asarray(arr, dtype=np.float32), BRIEF_SMOOTH_SIGMA))


def brief_bits(arr: np.ndarray, xs, ys, angles) -> np.ndarray:
    """Packed 32-byte descriptors for each point (rows); caller guarantees the border."""
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    angles = np.asarray(angles, dtype=np.float64)
    c, s = np.cos(angles), np.sin(angles)
    px = BRIEF_PATTERN[..., 0]
    py = BRIEF_PATTERN[..., 1]
    # rotate pattern per keypoint: (n, 256, 2)
    rx = np.rint(c[:, None, None] * px - s[:, None, None] * py).astype(np.intp)
    ry = np.rint(s[:, None, None] * px + c[:, None, None] * py).astype(np.intp)
    xi = np.rint(xs).astype(np.intp)[:, None, None] + rx
    yi = np.rint(ys).astype(np.intp)[:, None, None] + ry
    vals = arr[yi, xi]
    bits = vals[..., 0] < vals[..., 1]
    return np.packbits(bits, axis=1, bitorder="little")


def compute_brief(img: FloatImage, pt: FeaturePoint) -> bytes | None:
    """Steered BRIEF descriptor of ``pt`` on a pre-smoothed image; None near the border."""
    if not _brief_in_bounds(img.pixels.shape, pt.x, pt.y):
        return None
    return brief_bits(img.pixels, [pt.x], [pt.y], [pt.angle])[0].tobytes()


def _brief_in_bounds(shape, x, y) -> bool:
    h, w = shape
    return BRIEF_BORDER <= x < w - BRIEF_BORDER and BRIEF_BORDER <= y < h - BRIEF_BORDER


def with_descriptors(img: GrayImage, points: list[FeaturePoint]) -> list[FeaturePoint]:
    """Attach descriptors computed on a smoothed crop around the points."""
    if not points:
        return points
    arr = img.pixels
    h, w = arr.shape
    xs = np.array([p.x for p in points])
    ys = np.array([p.y for p in points])
    # margin wide enough that the crop's smoothing matches full-image smoothing
    margin = BRIEF_RADIUS + int(4 * BRIEF_SMOOTH_SIGMA) + 2
    cx0 = max(int(xs.min()) - margin, 0)
    cy0 = max(int(ys.min()) - margin, 0)
    cx1 = min(int(xs.max()) + margin + 1, w)
    cy1 = min(int(ys.max()) + margin + 1, h)
    smooth = smooth_for_brief(arr[cy0:cy1, cx0:cx1]).pixels
    ok = np.array([_brief_in_bounds((h, w), x, y) for x, y in zip(xs, ys)])
    out = list(points)
    if ok.any():
        desc = brief_bits(smooth, xs[ok] - cx0, ys[ok] - cy0, [p.angle for p, k in zip(points, ok) if k])
        for i, d in zip(np.flatnonzero(ok), desc):
            p = points[i]
            out[i] = FeaturePoint(p.x, p.y, p.score, p.angle, d.tobytes())
    return out


def hamming(a: bytes, b: bytes) -> int:
    return int(np.unpackbits(np.frombuffer(a, np.uint8) ^ np.frombuffer(b, np.uint8)).sum())
