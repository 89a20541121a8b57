"""Deterministic synthetic quad-frame scenes with geometric ground truth.

All geometry is carried in 1/16-pixel fixed point and every raster operation is
integer arithmetic, so a given ``ScenarioSpec`` renders to identical bytes on
any platform.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .imgcore import GrayImage, QuadFrame, save_image
from .roi import RoiConfig, default_config

FIX = 16  # fixed-point subdivisions per pixel
OCCUPANCY_FRACTION = (1, 4)  # actor-area overlap needed to mark an ROI occupied
SHAPES = ("rect", "disc", "textured")


@dataclass(frozen=True)
class Segment:
    """Move to ``target`` (top-left, px) at ``speed`` px/frame, or hold ``hold`` frames when speed is 0."""

    target: tuple[float, float] = (0.0, 0.0)
    speed: float = 0.0
    hold: int = 0

    def __post_init__(self):
        if self.speed < 0:
            raise ValueError("segment speed must be >= 0")
        if self.speed == 0 and self.hold < 0:
            raise ValueError("hold must be >= 0")


@dataclass(frozen=True)
class Actor:
    shape: str
    size: int
    start: tuple[float, float]
    segments: tuple[Segment, ...] = ()
    label: str = "pedestrian"
    intensity: int = 200

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise ValueError(f"unknown shape {self.shape!r}, expected one of {SHAPES}")
        if self.size < 2:
            raise ValueError("actor size must be >= 2 px")


@dataclass(frozen=True)
class ScenarioSpec:
    seed: int
    frames: int
    actors: tuple[Actor, ...] = ()
    background: str = "flat"
    noise_amplitude: int = 0
    background_level: int = 60
    frame_width: int = 1280
    frame_height: int = 720

    def __post_init__(self):
        if self.frames < 2:
            raise ValueError("a scenario needs at least 2 frames")
        if self.background not in ("flat", "textured"):
            raise ValueError(f"unknown background {self.background!r}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "ScenarioSpec":
        actors = tuple(
            Actor(
                shape=a["shape"], size=int(a["size"]), start=tuple(a["start"]),
                segments=tuple(Segment(tuple(s.get("target", (0, 0))), float(s.get("speed", 0)),
                                       int(s.get("hold", 0))) for s in a.get("segments", ())),
                label=a.get("label", "pedestrian"), intensity=int(a.get("intensity", 200)),
            )
            for a in doc.get("actors", ())
        )
        keys = ("background", "noise_amplitude", "background_level", "frame_width", "frame_height")
        return cls(seed=int(doc["seed"]), frames=int(doc["frames"]), actors=actors,
                   **{k: doc[k] for k in keys if k in doc})


@dataclass(frozen=True)
class CellTruth:
    label: str
    moving: bool


@dataclass(frozen=True)
class GroundTruth:
    """Per-frame map of occupied ROI index -> CellTruth."""

    frames: tuple[dict[int, CellTruth], ...]

    def __len__(self):
        return len(self.frames)

    def occupied(self, frame: int) -> frozenset[int]:
        return frozenset(self.frames[frame])

    def total_occupied(self) -> int:
        return sum(len(f) for f in self.frames)

    def subset(self, start: int, stop: int | None = None) -> "GroundTruth":
        return GroundTruth(self.frames[start:stop])


# ---------------------------------------------------------------------------
# trajectories


def _fx(v: float) -> int:
    return int(round(v * FIX))


def trajectory(actor: Actor, frames: int) -> np.ndarray:
    """(frames, 2) int64 top-left positions in 1/16 px."""
    pos = [(_fx(actor.start[0]), _fx(actor.start[1]))]
    for seg in actor.segments:
        x0, y0 = pos[-1]
        if seg.speed == 0:
            pos.extend([(x0, y0)] * seg.hold)
            continue
        x1, y1 = _fx(seg.target[0]), _fx(seg.target[1])
        dist = math.hypot(x1 - x0, y1 - y0) / FIX
        n = max(1, math.ceil(dist / seg.speed - 1e-9))
        for k in range(1, n + 1):
            pos.append((x0 + (x1 - x0) * k // n, y0 + (y1 - y0) * k // n))
    while len(pos) < frames:
        pos.append(pos[-1])
    return np.array(pos[:frames], dtype=np.int64)


def moving_flags(track: np.ndarray) -> np.ndarray:
    """Frame f is moving iff the position changed since f-1 (frame 0 looks ahead)."""
    changed = np.any(track[1:] != track[:-1], axis=1)
    return np.concatenate([changed[:1], changed])


# ---------------------------------------------------------------------------
# rasterisation


def _texture(rng: np.random.Generator, size: int) -> np.ndarray:
    blocks = -(-size // 4)
    coarse = rng.integers(0, 2, size=(blocks, blocks)) * 180 + rng.integers(20, 60, size=(blocks, blocks))
    return np.kron(coarse, np.ones((4, 4), dtype=np.int64))[:size, :size]


def _background(spec: ScenarioSpec) -> np.ndarray:
    h, w = spec.frame_height, spec.frame_width
    bg = np.full((h, w), spec.background_level, dtype=np.int64)
    if spec.background == "textured" and spec.noise_amplitude > 0:
        rng = np.random.default_rng([spec.seed, 0xB6])
        a = spec.noise_amplitude
        cells = rng.integers(-a, a + 1, size=(-(-h // 8), -(-w // 8)))
        bg += np.kron(cells, np.ones((8, 8), dtype=np.int64))[:h, :w]
    return np.clip(bg, 0, 255)


def _axis_coverage(lo16: int, size: int, n: int) -> tuple[int, np.ndarray]:
    """First pixel index and per-pixel coverage (0..16) of the span [lo16, lo16 + 16*size)."""
    hi16 = lo16 + FIX * size
    p0 = max(lo16 // FIX, 0)
    p1 = min(-(-hi16 // FIX), n)
    if p1 <= p0:
        return p0, np.zeros(0, dtype=np.int64)
    edges = np.arange(p0, p1, dtype=np.int64) * FIX
    cov = np.minimum(edges + FIX, hi16) - np.maximum(edges, lo16)
    return p0, np.clip(cov, 0, FIX)


def _draw(canvas: np.ndarray, actor: Actor, pos: tuple[int, int], texture: np.ndarray | None) -> None:
    h, w = canvas.shape
    x16, y16 = int(pos[0]), int(pos[1])
    px0, cx = _axis_coverage(x16, actor.size, w)
    py0, cy = _axis_coverage(y16, actor.size, h)
    if cx.size == 0 or cy.size == 0:
        return
    xs = np.arange(px0, px0 + cx.size, dtype=np.int64)
    ys = np.arange(py0, py0 + cy.size, dtype=np.int64)
    if actor.shape == "disc":
        # 4x4 supersampled coverage against the inscribed circle
        r16 = FIX * actor.size // 2
        cxc, cyc = x16 + r16, y16 + r16
        sub = np.arange(4, dtype=np.int64) * 4 + 2
        sx = (xs[:, None] * FIX + sub[None, :]) - cxc
        sy = (ys[:, None] * FIX + sub[None, :]) - cyc
        inside = (sy[:, None, :, None] ** 2 + sx[None, :, None, :] ** 2) <= r16 * r16
        alpha = inside.sum(axis=(2, 3)) * FIX
    else:
        alpha = cy[:, None] * cx[None, :]
    if texture is not None:
        s = actor.size
        u = xs * FIX - x16
        v = ys * FIX - y16
        i0 = np.clip(np.floor_divide(u, FIX), 0, s - 1)
        j0 = np.clip(np.floor_divide(v, FIX), 0, s - 1)
        fu = np.where((u >= 0) & (u < FIX * (s - 1)), u & (FIX - 1), 0)
        fv = np.where((v >= 0) & (v < FIX * (s - 1)), v & (FIX - 1), 0)
        i1 = np.minimum(i0 + 1, s - 1)
        j1 = np.minimum(j0 + 1, s - 1)
        t = texture
        acc = (
            t[np.ix_(j0, i0)] * ((FIX - fv)[:, None] * (FIX - fu)[None, :])
            + t[np.ix_(j0, i1)] * ((FIX - fv)[:, None] * fu[None, :])
            + t[np.ix_(j1, i0)] * (fv[:, None] * (FIX - fu)[None, :])
            + t[np.ix_(j1, i1)] * (fv[:, None] * fu[None, :])
        )
        value = (acc + 128) >> 8
    else:
        value = np.full(alpha.shape, actor.intensity, dtype=np.int64)
    region = canvas[py0 : py0 + cy.size, px0 : px0 + cx.size]
    region[...] = (alpha * value + (256 - alpha) * region + 128) >> 8


def _check_bounds(spec: ScenarioSpec, tracks: Sequence[np.ndarray]) -> None:
    for k, (actor, tr) in enumerate(zip(spec.actors, tracks)):
        lo = tr.min(axis=0)
        hi = tr.max(axis=0) + FIX * actor.size
        if lo.min() < 0 or hi[0] > FIX * spec.frame_width or hi[1] > FIX * spec.frame_height:
            raise ValueError(f"actor {k} trajectory leaves the {spec.frame_width}x{spec.frame_height} frame")


def ground_truth(spec: ScenarioSpec, config: RoiConfig, tracks: Sequence[np.ndarray] | None = None) -> GroundTruth:
    """Occupancy from geometry alone: actor box overlapping an ROI by >= 25 % of its area."""
    if tracks is None:
        tracks = [trajectory(a, spec.frames) for a in spec.actors]
    num, den = OCCUPANCY_FRACTION
    frames = []
    flags = [moving_flags(t) for t in tracks]
    for f in range(spec.frames):
        cells: dict[int, tuple[int, CellTruth]] = {}
        for actor, tr, mv in zip(spec.actors, tracks, flags):
            ax, ay = int(tr[f, 0]), int(tr[f, 1])
            side = FIX * actor.size
            area = side * side
            for roi in config:
                rx, ry = FIX * roi.x, FIX * roi.y
                ox = min(ax + side, rx + FIX * roi.w) - max(ax, rx)
                oy = min(ay + side, ry + FIX * roi.h) - max(ay, ry)
                if ox <= 0 or oy <= 0:
                    continue
                overlap = ox * oy
                if den * overlap >= num * area:
                    best = cells.get(roi.index)
                    if best is None or overlap > best[0]:
                        cells[roi.index] = (overlap, CellTruth(actor.label, bool(mv[f])))
        frames.append({k: v[1] for k, v in sorted(cells.items())})
    return GroundTruth(tuple(frames))


def render(spec: ScenarioSpec, config: RoiConfig | None = None) -> tuple[list[QuadFrame], GroundTruth]:
    config = config or default_config(spec.frame_width, spec.frame_height)
    tracks = [trajectory(a, spec.frames) for a in spec.actors]
    _check_bounds(spec, tracks)
    rng = np.random.default_rng([spec.seed, 0xAC7])
    textures = [_texture(rng, a.size) if a.shape == "textured" else None for a in spec.actors]
    bg = _background(spec)
    frames = []
    for f in range(spec.frames):
        canvas = bg.copy()
        for actor, tr, tex in zip(spec.actors, tracks, textures):
            _draw(canvas, actor, tr[f], tex)
        frames.append(QuadFrame(GrayImage(canvas.astype(np.uint8)), f, round(f * 1e6 / 30)))
    return frames, ground_truth(spec, config, tracks)


# ---------------------------------------------------------------------------
# canned scenarios


def stop_and_hold_scenario(seed: int = 0, frame_width: int = 1280, frame_height: int = 720) -> ScenarioSpec:
    """A textured actor slides into a front-camera ROI, stops for 30 frames, then leaves.

    Three segments: move 20 frames, hold 30 frames, exit upwards out of the ROI
    band over 10 frames; 60 frames total.
    """
    config = default_config(frame_width, frame_height)
    roi = config[1]
    size = max(16, roi.h // 4)
    y = roi.y + (roi.h - size) // 2
    start_x = roi.x - size // 2
    stop_x = start_x + 20 * 3
    exit_y = max(roi.y - size - 4, 0)
    actor = Actor(
        shape="textured", size=size, start=(start_x, y), label="pedestrian",
        segments=(
            Segment((stop_x, y), speed=3.0),
            Segment(speed=0.0, hold=30),
            Segment((stop_x, exit_y), speed=(y - exit_y) / 10),
        ),
    )
    return ScenarioSpec(seed=seed, frames=60, actors=(actor,), background="textured",
                        noise_amplitude=12, frame_width=frame_width, frame_height=frame_height)


def random_scenario(seed: int, frames: int = 40, frame_width: int = 640, frame_height: int = 360,
                    labels: Sequence[str] = ("pedestrian", "bicycle", "shopping_cart", "vehicle")) -> ScenarioSpec:
    """1-3 actors moving (and sometimes pausing) inside the ROI bands of random cameras."""
    rng = np.random.default_rng(seed)
    config = default_config(frame_width, frame_height)
    n_actors = int(rng.integers(1, 4))
    cameras = rng.permutation(4)[:n_actors]
    actors = []
    for cam in cameras:
        band = [config[3 * int(cam) + k] for k in range(3)]
        bx0, bx1 = band[0].x, band[2].x + band[2].w
        by0, by1 = band[0].y, band[0].y + band[0].h
        size = int(rng.integers(max(16, band[0].h // 4), max(17, band[0].h // 2)))
        y = float(rng.integers(by0 + 2, by1 - size - 1))
        x_a = float(rng.integers(bx0 + 2, bx0 + (bx1 - bx0) // 3))
        x_b = float(rng.integers(bx1 - (bx1 - bx0) // 3, bx1 - size - 1))
        if rng.random() < 0.5:
            x_a, x_b = x_b, x_a
        speed = float(rng.uniform(2.5, 5.0))
        mid = x_a + (x_b - x_a) * float(rng.uniform(0.35, 0.65))
        segs = [Segment((mid, y), speed)]
        if rng.random() < 0.5:
            segs.append(Segment(speed=0.0, hold=int(rng.integers(5, 15))))
        segs.append(Segment((x_b, y), speed))
        shape = str(rng.choice(["textured", "textured", "rect"]))
        actors.append(Actor(shape=shape, size=size, start=(x_a, y), segments=tuple(segs),
                            label=str(rng.choice(list(labels))), intensity=int(rng.integers(170, 240))))
    background = "textured" if rng.random() < 0.5 else "flat"
    return ScenarioSpec(seed=seed, frames=frames, actors=tuple(actors), background=background,
                        noise_amplitude=10 if background == "textured" else 0,
                        frame_width=frame_width, frame_height=frame_height)


# ---------------------------------------------------------------------------
# files


def load_scenario(path: str | os.PathLike) -> ScenarioSpec:
    with open(path) as fh:
        return ScenarioSpec.from_dict(json.load(fh))


def save_scenario(spec: ScenarioSpec, path: str | os.PathLike) -> None:
    with open(path, "w") as fh:
        json.dump(spec.to_dict(), fh, indent=2)
        fh.write("\n")


def write_truth_csv(truth: GroundTruth, path_or_file) -> None:
    own = isinstance(path_or_file, (str, os.PathLike))
    fh = open(path_or_file, "w", newline="") if own else path_or_file
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["frame", "roi", "class", "moving"])
        for f, cells in enumerate(truth.frames):
            for roi, cell in cells.items():
                w.writerow([f, roi, cell.label, int(cell.moving)])
    finally:
        if own:
            fh.close()


def read_truth_csv(path: str | os.PathLike, frames: int | None = None) -> GroundTruth:
    rows: dict[int, dict[int, CellTruth]] = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            f = int(row["frame"])
            rows.setdefault(f, {})[int(row["roi"])] = CellTruth(row["class"], row["moving"] in ("1", "true", "True"))
    n = frames if frames is not None else (max(rows) + 1 if rows else 0)
    return GroundTruth(tuple(dict(sorted(rows.get(f, {}).items())) for f in range(n)))


def write_rendered(spec: ScenarioSpec, out_dir: str | os.PathLike, config: RoiConfig | None = None) -> GroundTruth:
    """Numbered PGMs plus truth.csv in ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    frames, truth = render(spec, config)
    for fr in frames:
        save_image(fr.image, out / f"frame_{fr.frame_index:05d}.pgm")
    write_truth_csv(truth, out / "truth.csv")
    return truth
