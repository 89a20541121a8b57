"""Sparse coarse-to-fine Lucas-Kanade, vectorised across points."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from ..imgcore import Pyramid, sample_bilinear_many
from .features import FeaturePoint
from .params import DetectParams


class TrackStatus(str, Enum):
    CONVERGED = "converged"
    LOST = "lost"
    OUT_OF_BOUNDS = "out_of_bounds"


CONVERGED, LOST, OUT_OF_BOUNDS = 0, 1, 2
STATUS_BY_CODE = (TrackStatus.CONVERGED, TrackStatus.LOST, TrackStatus.OUT_OF_BOUNDS)


@dataclass(frozen=True)
class TrackResult:
    origin: FeaturePoint
    tracked_x: float
    tracked_y: float
    status: TrackStatus
    residual: float

    @property
    def converged(self) -> bool:
        return self.status is TrackStatus.CONVERGED

    @property
    def dx(self) -> float:
        return self.tracked_x - self.origin.x

    @property
    def dy(self) -> float:
        return self.tracked_y - self.origin.y


def _window(half: int) -> tuple[np.ndarray, np.ndarray]:
    r = np.arange(-half, half + 1, dtype=np.float64)
    oy, ox = np.meshgrid(r, r, indexing="ij")
    return ox.ravel(), oy.ravel()


def lk_track_arrays(prev_pyr: Pyramid, cur_pyr: Pyramid, pts: np.ndarray, params: DetectParams):
    """Track (N, 2) points from ``prev_pyr`` to ``cur_pyr``.

    Returns ``(tracked, status, residual)`` where ``status`` holds integer codes
    (index into ``STATUS_BY_CODE``) and ``residual`` is the mean absolute level-0 intensity error over
    the window at the final position.
    """
    pts = np.asarray(pts, dtype=np.float64).reshape(-1, 2)
    n = len(pts)
    if n == 0:
        return np.zeros((0, 2)), np.zeros(0, dtype=np.int8), np.zeros(0)
    if prev_pyr[0].pixels.shape != cur_pyr[0].pixels.shape:
        raise ValueError("pyramids were built from frames of different size")
    levels = min(params.lk_levels, len(prev_pyr), len(cur_pyr))
    ox, oy = _window(params.lk_window // 2)
    area = ox.size
    eig_scale = 1.0 / (area * 255.0**2)

    guess = np.zeros((n, 2))
    lost = np.zeros(n, dtype=bool)
    for lvl in range(levels - 1, -1, -1):
        prev = prev_pyr[lvl].pixels
        cur = cur_pyr[lvl].pixels
        p = (pts + 0.5) / (1 << lvl) - 0.5
        X = p[:, :1] + ox
        Y = p[:, 1:] + oy
        A = sample_bilinear_many(prev, X, Y)
        Ix = 0.5 * (sample_bilinear_many(prev, X + 1, Y) - sample_bilinear_many(prev, X - 1, Y))
        Iy = 0.5 * (sample_bilinear_many(prev, X, Y + 1) - sample_bilinear_many(prev, X, Y - 1))
        gxx = np.einsum("ij,ij->i", Ix, Ix)
        gyy = np.einsum("ij,ij->i", Iy, Iy)
        gxy = np.einsum("ij,ij->i", Ix, Iy)
        det = gxx * gyy - gxy * gxy
        min_eig = 0.5 * (gxx + gyy - np.sqrt((gxx - gyy) ** 2 + 4 * gxy * gxy)) * eig_scale
        singular = (min_eig < params.lk_min_eig) | (det <= 0)
        if lvl == 0:
            lost |= singular

        step = np.zeros((n, 2))
        active = np.flatnonzero(~singular & ~lost)
        for _ in range(params.lk_max_iters):
            if active.size == 0:
                break
            shift = guess[active] + step[active]
            B = sample_bilinear_many(cur, X[active] + shift[:, :1], Y[active] + shift[:, 1:])
            err = A[active] - B
            bx = np.einsum("ij,ij->i", err, Ix[active])
            by = np.einsum("ij,ij->i", err, Iy[active])
            d = det[active]
            ex = (gyy[active] * bx - gxy[active] * by) / d
            ey = (gxx[active] * by - gxy[active] * bx) / d
            step[active, 0] += ex
            step[active, 1] += ey
            active = active[np.hypot(ex, ey) >= params.lk_epsilon]
        guess = guess + step
        if lvl > 0:
            guess *= 2.0

    tracked = pts + guess
    prev0 = prev_pyr[0].pixels
    cur0 = cur_pyr[0].pixels
    X = pts[:, :1] + ox
    Y = pts[:, 1:] + oy
    A = sample_bilinear_many(prev0, X, Y)
    B = sample_bilinear_many(cur0, X + guess[:, :1], Y + guess[:, 1:])
    residual = np.abs(A - B).mean(axis=1)

    h, w = prev0.shape
    finite = np.isfinite(tracked).all(axis=1)
    inside = finite & (tracked[:, 0] >= 0) & (tracked[:, 0] <= w - 1) & (tracked[:, 1] >= 0) & (tracked[:, 1] <= h - 1)
    status = np.full(n, CONVERGED, dtype=np.int8)
    status[~inside] = OUT_OF_BOUNDS
    status[lost | ~finite | (residual > params.lk_max_residual)] = LOST
    return tracked, status, residual


def lk_track(prev_pyr: Pyramid, cur_pyr: Pyramid, points: list[FeaturePoint],
             params: DetectParams | None = None) -> list[TrackResult]:
    params = params or DetectParams()
    if not points:
        return []
    xy = np.array([(p.x, p.y) for p in points])
    tracked, status, residual = lk_track_arrays(prev_pyr, cur_pyr, xy, params)
    return [
        TrackResult(pt, float(t[0]), float(t[1]), STATUS_BY_CODE[s], float(r))
        for pt, t, s, r in zip(points, tracked, status, residual)
    ]
