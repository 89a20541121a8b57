"""The twelve fixed regions of interest and their vehicle-surround mapping."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from enum import Enum
from typing import Callable

import numpy as np

from .imgcore import CAMERA_ORDER, TILE_POSITION

N_ROIS = 12
MIN_ROI_SIDE = 16


class Camera(str, Enum):
    FRONT = "front"
    BACK = "back"
    LEFT = "left"
    RIGHT = "right"


class Region(str, Enum):
    FRONT_LEFT = "front_left"
    FRONT_CENTER = "front_center"
    FRONT_RIGHT = "front_right"
    BACK_LEFT = "back_left"
    BACK_CENTER = "back_center"
    BACK_RIGHT = "back_right"
    LEFT_SIDE = "left_side"
    RIGHT_SIDE = "right_side"


# Image-left / centre / image-right third of each camera's lower band.
# Rear and side cameras see the vehicle flanks mirrored relative to the front one.
DEFAULT_REGIONS = {
    Camera.FRONT: (Region.FRONT_LEFT, Region.FRONT_CENTER, Region.FRONT_RIGHT),
    Camera.BACK: (Region.BACK_RIGHT, Region.BACK_CENTER, Region.BACK_LEFT),
    Camera.LEFT: (Region.BACK_LEFT, Region.LEFT_SIDE, Region.FRONT_LEFT),
    Camera.RIGHT: (Region.FRONT_RIGHT, Region.RIGHT_SIDE, Region.BACK_RIGHT),
}


class RoiConfigError(ValueError):
    """Config violates a layout rule; ``rule`` names it, ``index`` the offending ROI."""

    def __init__(self, rule: str, message: str, index: int | None = None):
        prefix = f"ROI {index}: " if index is not None else ""
        super().__init__(f"{prefix}{message} [{rule}]")
        self.rule = rule
        self.index = index


@dataclass(frozen=True)
class Roi:
    index: int
    x: int
    y: int
    w: int
    h: int
    camera: Camera
    region: Region

    @property
    def rect(self) -> tuple[int, int, int, int]:
        return (self.x, self.y, self.w, self.h)

    def contains(self, px, py):
        """Half-open membership: x in [x, x+w), y in [y, y+h). Works on arrays."""
        return (px >= self.x) & (px < self.x + self.w) & (py >= self.y) & (py < self.y + self.h)

    def slices(self) -> tuple[slice, slice]:
        return slice(self.y, self.y + self.h), slice(self.x, self.x + self.w)


@dataclass(frozen=True)
class RoiConfig:
    frame_width: int
    frame_height: int
    rois: tuple[Roi, ...]

    def __post_init__(self):
        object.__setattr__(self, "rois", tuple(sorted(self.rois, key=lambda r: r.index)))

    def __getitem__(self, index: int) -> Roi:
        return self.rois[index]

    def __iter__(self):
        return iter(self.rois)

    def __len__(self):
        return len(self.rois)

    def quadrant(self, camera: Camera) -> tuple[int, int, int, int]:
        tw, th = self.frame_width // 2, self.frame_height // 2
        r, c = TILE_POSITION[camera.value]
        return (c * tw, r * th, tw, th)

    def locate(self, xs, ys) -> np.ndarray:
        """ROI index for each point, -1 where no ROI contains it."""
        xs = np.asarray(xs)
        ys = np.asarray(ys)
        out = np.full(xs.shape, -1, dtype=np.intp)
        for roi in reversed(self.rois):
            out[roi.contains(xs, ys)] = roi.index
        return out

    def to_dict(self) -> dict:
        return {
            "frame_width": self.frame_width,
            "frame_height": self.frame_height,
            "rois": [
                {"index": r.index, "x": r.x, "y": r.y, "w": r.w, "h": r.h,
                 "camera": r.camera.value, "region": r.region.value}
                for r in self.rois
            ],
        }


def validate_config(config: RoiConfig) -> RoiConfig:
    if config.frame_width % 2 or config.frame_height % 2:
        raise RoiConfigError("even-frame", "frame dimensions must be even")
    if len(config.rois) != N_ROIS:
        raise RoiConfigError("count", f"expected {N_ROIS} ROIs, got {len(config.rois)}")
    seen: set[int] = set()
    for roi in config.rois:
        if not 0 <= roi.index < N_ROIS:
            raise RoiConfigError("index-range", "index outside 0..11", roi.index)
        if roi.index in seen:
            raise RoiConfigError("duplicate-index", "index appears more than once", roi.index)
        seen.add(roi.index)
        if roi.w < MIN_ROI_SIDE or roi.h < MIN_ROI_SIDE:
            raise RoiConfigError(
                "min-size", f"rect {roi.w}x{roi.h} smaller than {MIN_ROI_SIDE}x{MIN_ROI_SIDE}", roi.index
            )
        qx, qy, qw, qh = config.quadrant(roi.camera)
        if roi.x < qx or roi.y < qy or roi.x + roi.w > qx + qw or roi.y + roi.h > qy + qh:
            raise RoiConfigError(
                "within-quadrant", f"rect {roi.rect} leaves the {roi.camera.value} quadrant", roi.index
            )
    missing = set(Region) - {r.region for r in config.rois}
    if missing:
        names = ", ".join(sorted(m.value for m in missing))
        raise RoiConfigError("region-coverage", f"regions not covered: {names}")
    return config


_ROI_KEYS = {"index": int, "x": int, "y": int, "w": int, "h": int, "camera": str, "region": str}


def config_from_dict(doc: dict) -> RoiConfig:
    if not isinstance(doc, dict):
        raise RoiConfigError("schema", "top level must be an object")
    for key in ("frame_width", "frame_height", "rois"):
        if key not in doc:
            raise RoiConfigError("schema", f"missing key '{key}'")
    if not isinstance(doc["rois"], list):
        raise RoiConfigError("schema", "'rois' must be a list")
    rois = []
    for pos, entry in enumerate(doc["rois"]):
        idx = entry.get("index", pos) if isinstance(entry, dict) else pos
        if not isinstance(entry, dict):
            raise RoiConfigError("schema", "entry must be an object", idx)
        for key, typ in _ROI_KEYS.items():
            if key not in entry:
                raise RoiConfigError("schema", f"missing key '{key}'", idx)
            if not isinstance(entry[key], typ) or isinstance(entry[key], bool):
                raise RoiConfigError("schema", f"'{key}' must be {typ.__name__}", idx)
        try:
            camera = Camera(entry["camera"])
            region = Region(entry["region"])
        except ValueError as exc:
            raise RoiConfigError("schema", str(exc), idx) from None
        rois.append(Roi(entry["index"], entry["x"], entry["y"], entry["w"], entry["h"], camera, region))
    config = RoiConfig(int(doc["frame_width"]), int(doc["frame_height"]), tuple(rois))
    return validate_config(config)


def load_roi_config(path: str | os.PathLike) -> RoiConfig:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise RoiConfigError("schema", f"invalid JSON: {exc}") from None
    return config_from_dict(doc)


def save_roi_config(config: RoiConfig, path: str | os.PathLike) -> None:
    with open(path, "w") as fh:
        json.dump(config.to_dict(), fh, indent=2)
        fh.write("\n")


def default_config(frame_width: int, frame_height: int) -> RoiConfig:
    """Three side-by-side ROIs spanning the lower half of each camera tile."""
    if frame_width % 2 or frame_height % 2:
        raise ValueError("frame dimensions must be even")
    if frame_width < 128 or frame_height < 128:
        raise ValueError(f"frame {frame_width}x{frame_height} too small, need at least 128x128")
    tw, th = frame_width // 2, frame_height // 2
    band_y = th // 2
    cuts = [k * tw // 3 for k in range(4)]
    rois = []
    for cam_pos, name in enumerate(CAMERA_ORDER):
        camera = Camera(name)
        r, c = TILE_POSITION[name]
        for third in range(3):
            rois.append(Roi(
                index=3 * cam_pos + third,
                x=c * tw + cuts[third],
                y=r * th + band_y,
                w=cuts[third + 1] - cuts[third],
                h=th - band_y,
                camera=camera,
                region=DEFAULT_REGIONS[camera][third],
            ))
    return validate_config(RoiConfig(frame_width, frame_height, tuple(rois)))


def roi_mask(config: RoiConfig, index: int) -> Callable[[int, int], bool]:
    if not 0 <= index < len(config.rois):
        raise IndexError(f"ROI index {index} out of range")
    return config[index].contains
