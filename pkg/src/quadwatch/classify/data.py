"""Training data: a synthetic shape set and ``label_name/*.pgm`` directories."""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np

from ..imgcore import load_image, resize_bilinear, save_image, GrayImage

SHAPE_CLASSES = ("rect", "disc", "triangle")


def _shape_mask(kind: str, side: int, rng: np.random.Generator) -> np.ndarray:
    yy, xx = np.mgrid[0:side, 0:side] + 0.5
    size = rng.uniform(0.35, 0.7) * side
    cx = rng.uniform(size / 2, side - size / 2)
    cy = rng.uniform(size / 2, side - size / 2)
    if kind == "rect":
        aspect = rng.uniform(0.6, 1.0)
        hw, hh = size / 2, size * aspect / 2
        return (np.abs(xx - cx) <= hw) & (np.abs(yy - cy) <= hh)
    if kind == "disc":
        return (xx - cx) ** 2 + (yy - cy) ** 2 <= (size / 2) ** 2
    if kind == "triangle":
        # upright isosceles triangle inscribed in the size x size box
        top = cy - size / 2
        frac = (yy - top) / size
        return (frac >= 0) & (frac <= 1) & (np.abs(xx - cx) <= frac * size / 2)
    raise ValueError(f"unknown shape {kind!r}")


def make_shape_dataset(n_per_class: int = 500, side: int = 32, seed: int = 0,
                       classes=SHAPE_CLASSES) -> tuple[np.ndarray, np.ndarray]:
    """Noisy single-shape images; returns ``(X uint8 (n, side, side), y str)`` shuffled."""
    rng = np.random.default_rng(seed)
    xs, ys = [], []
    for kind in classes:
        for _ in range(n_per_class):
            mask = _shape_mask(kind, side, rng)
            bg = rng.uniform(20, 110)
            fg = bg + rng.uniform(60, 120)
            img = np.where(mask, fg, bg) + rng.normal(0, 8, size=(side, side))
            xs.append(np.clip(np.rint(img), 0, 255).astype(np.uint8))
            ys.append(kind)
    order = rng.permutation(len(xs))
    return np.stack(xs)[order], np.array(ys)[order]


def load_image_dataset(root: str | os.PathLike, side: int = 32) -> tuple[np.ndarray, np.ndarray]:
    """Read ``root/<label>/*.pgm|*.ppm`` into a resized uint8 stack and label array."""
    root = Path(root)
    xs, ys = [], []
    for label_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        for f in sorted(label_dir.iterdir()):
            if f.suffix.lower() not in (".pgm", ".ppm"):
                continue
            arr = load_image(f).pixels
            if arr.shape != (side, side):
                arr = np.clip(np.rint(resize_bilinear(arr, side, side)), 0, 255).astype(np.uint8)
            xs.append(arr)
            ys.append(label_dir.name)
    if not xs:
        raise ValueError(f"no labelled images under {root}")
    return np.stack(xs), np.array(ys)


def write_image_dataset(X: np.ndarray, y, root: str | os.PathLike) -> None:
    root = Path(root)
    counts: dict[str, int] = {}
    for img, label in zip(X, y):
        d = root / str(label)
        d.mkdir(parents=True, exist_ok=True)
        k = counts.get(str(label), 0)
        counts[str(label)] = k + 1
        save_image(GrayImage(img), d / f"{k:05d}.pgm")
