"""ROI overlays for human inspection: coloured boxes and 5x7 bitmap labels."""

from __future__ import annotations

import numpy as np

from .imgcore import QuadFrame
from .labels import DEFAULT_CLASS_NAMES
from .roi import RoiConfig
from .verdict import FrameVerdict, RoiMode

GREEN = (0, 255, 0)
RED = (255, 0, 0)
YELLOW = (255, 255, 0)
MODE_COLOURS = {RoiMode.EMPTY: GREEN, RoiMode.MOVING: RED, RoiMode.STOPPED_LATCHED: YELLOW}
BOX_THICKNESS = 2

# Each glyph is 7 rows of 5 bits, most significant bit leftmost.
FONT_5X7: dict[str, tuple[int, ...]] = {
    " ": (0, 0, 0, 0, 0, 0, 0),
    "A": (14, 17, 17, 31, 17, 17, 17),
    "B": (30, 17, 17, 30, 17, 17, 30),
    "C": (14, 17, 16, 16, 16, 17, 14),
    "D": (30, 17, 17, 17, 17, 17, 30),
    "E": (31, 16, 16, 30, 16, 16, 31),
    "F": (31, 16, 16, 30, 16, 16, 16),
    "G": (14, 17, 16, 23, 17, 17, 15),
    "H": (17, 17, 17, 31, 17, 17, 17),
    "I": (14, 4, 4, 4, 4, 4, 14),
    "J": (7, 2, 2, 2, 2, 18, 12),
    "K": (17, 18, 20, 24, 20, 18, 17),
    "L": (16, 16, 16, 16, 16, 16, 31),
    "M": (17, 27, 21, 21, 17, 17, 17),
    "N": (17, 17, 25, 21, 19, 17, 17),
    "O": (14, 17, 17, 17, 17, 17, 14),
    "P": (30, 17, 17, 30, 16, 16, 16),
    "Q": (14, 17, 17, 17, 21, 18, 13),
    "R": (30, 17, 17, 30, 20, 18, 17),
    "S": (15, 16, 16, 14, 1, 1, 30),
    "T": (31, 4, 4, 4, 4, 4, 4),
    "U": (17, 17, 17, 17, 17, 17, 14),
    "V": (17, 17, 17, 17, 17, 10, 4),
    "W": (17, 17, 17, 21, 21, 21, 10),
    "X": (17, 17, 10, 4, 10, 17, 17),
    "Y": (17, 17, 10, 4, 4, 4, 4),
    "Z": (31, 1, 2, 4, 8, 16, 31),
    "0": (14, 17, 19, 21, 25, 17, 14),
    "1": (4, 12, 4, 4, 4, 4, 14),
    "2": (14, 17, 1, 2, 4, 8, 31),
    "3": (31, 2, 4, 2, 1, 17, 14),
    "4": (2, 6, 10, 18, 31, 2, 2),
    "5": (31, 16, 30, 1, 1, 17, 14),
    "6": (6, 8, 16, 30, 17, 17, 14),
    "7": (31, 1, 2, 4, 8, 8, 8),
    "8": (14, 17, 17, 14, 17, 17, 14),
    "9": (14, 17, 17, 15, 1, 2, 12),
    ".": (0, 0, 0, 0, 0, 12, 12),
    "_": (0, 0, 0, 0, 0, 0, 31),
    "-": (0, 0, 0, 31, 0, 0, 0),
    "?": (14, 17, 1, 2, 4, 0, 4),
}
GLYPH_W, GLYPH_H, GLYPH_ADVANCE = 5, 7, 6


def draw_text(rgb: np.ndarray, x: int, y: int, text: str, colour) -> None:
    """Stamp ``text`` (upper-cased) with its top-left corner at (x, y), clipped to the image."""
    h, w = rgb.shape[:2]
    for i, ch in enumerate(text.upper()):
        rows = FONT_5X7.get(ch, FONT_5X7["?"])
        gx = x + i * GLYPH_ADVANCE
        for r, bits in enumerate(rows):
            yy = y + r
            if not 0 <= yy < h:
                continue
            for c in range(GLYPH_W):
                xx = gx + c
                if bits >> (GLYPH_W - 1 - c) & 1 and 0 <= xx < w:
                    rgb[yy, xx] = colour


def draw_box(rgb: np.ndarray, x: int, y: int, w: int, h: int, colour, thickness: int = BOX_THICKNESS) -> None:
    t = max(1, min(thickness, w // 2, h // 2))
    rgb[y : y + t, x : x + w] = colour
    rgb[y + h - t : y + h, x : x + w] = colour
    rgb[y : y + h, x : x + t] = colour
    rgb[y : y + h, x + w - t : x + w] = colour


def annotate_frame(frame: QuadFrame, verdict: FrameVerdict, config: RoiConfig,
                   class_names=DEFAULT_CLASS_NAMES) -> np.ndarray:
    """RGB uint8 copy of the frame with every ROI boxed by mode and labelled when classified.

    Green is empty, red moving, yellow latched. Labels read ``NAME 0.87``.
    """
    g = frame.image.pixels
    rgb = np.repeat(g[:, :, None], 3, axis=2).copy()
    for roi in config:
        mode = verdict.occupied.get(roi.index, RoiMode.EMPTY)
        colour = MODE_COLOURS[mode]
        draw_box(rgb, roi.x, roi.y, roi.w, roi.h, colour)
        if roi.index in verdict.labels:
            class_id, conf = verdict.labels[roi.index]
            name = class_names[class_id] if 0 <= class_id < len(class_names) else str(class_id)
            draw_text(rgb, roi.x + BOX_THICKNESS + 1, roi.y + BOX_THICKNESS + 1, f"{name} {conf:.2f}", colour)
    return rgb
