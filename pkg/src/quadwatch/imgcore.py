"""Image substrate: rasters, PGM/PPM/Y4M I/O, pyramids and quad-view merging."""

from __future__ import annotations

import os
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

PYRAMID_MIN_DIM = 8

# Rec.601 luma weights in 1/1000 units; integer arithmetic keeps goldens stable.
_LUMA_R, _LUMA_G, _LUMA_B = 299, 587, 114


class ImageFormatError(ValueError):
    """Malformed image file; ``offset`` is the byte where parsing failed."""

    def __init__(self, message: str, offset: int, path: str | os.PathLike | None = None):
        where = f"{path}: " if path is not None else ""
        super().__init__(f"{where}{message} (byte offset {offset})")
        self.offset = offset
        self.path = path


def _frozen(arr: np.ndarray, dtype) -> np.ndarray:
    out = np.ascontiguousarray(arr, dtype=dtype)
    if out is arr:
        out = out.copy()
    out.flags.writeable = False
    return out


@dataclass(frozen=True, eq=False)
class GrayImage:
    """Single-channel 8-bit raster, stored as a read-only (height, width) array."""

    pixels: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.pixels)
        if arr.ndim != 2:
            raise ValueError(f"GrayImage needs a 2-D array, got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError("GrayImage dimensions must be >= 1")
        if arr.dtype != np.uint8:
            if np.any((arr < 0) | (arr > 255)):
                raise ValueError("GrayImage samples must lie in [0, 255]")
        object.__setattr__(self, "pixels", _frozen(arr, np.uint8))

    @classmethod
    def from_bytes(cls, width: int, height: int, data: Sequence[int] | bytes) -> "GrayImage":
        buf = np.asarray(bytearray(data) if isinstance(data, (bytes, bytearray)) else data)
        if buf.size != width * height:
            raise ValueError(f"expected {width * height} samples, got {buf.size}")
        return cls(buf.reshape(height, width))

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def data(self) -> bytes:
        return self.pixels.tobytes()

    def __eq__(self, other):
        if not isinstance(other, GrayImage):
            return NotImplemented
        return self.pixels.shape == other.pixels.shape and np.array_equal(self.pixels, other.pixels)

    def __repr__(self):
        return f"GrayImage({self.width}x{self.height})"


@dataclass(frozen=True, eq=False)
class FloatImage:
    """Single-precision raster used for pyramid levels."""

    pixels: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.pixels)
        if arr.ndim != 2:
            raise ValueError(f"FloatImage needs a 2-D array, got shape {arr.shape}")
        object.__setattr__(self, "pixels", _frozen(arr, np.float32))

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


@dataclass(frozen=True, eq=False)
class QuadFrame:
    """Four camera tiles merged 2x2: front | back over left | right."""

    image: GrayImage
    frame_index: int = 0
    timestamp_us: int = 0

    def __post_init__(self):
        if self.image.width % 2 or self.image.height % 2:
            raise ValueError(
                f"quad frame dimensions must be even, got {self.image.width}x{self.image.height}"
            )

    @property
    def width(self) -> int:
        return self.image.width

    @property
    def height(self) -> int:
        return self.image.height


CAMERA_ORDER = ("front", "back", "left", "right")
# (row, col) of each camera tile in the 2x2 layout.
TILE_POSITION = {"front": (0, 0), "back": (0, 1), "left": (1, 0), "right": (1, 1)}


@dataclass(frozen=True)
class Pyramid:
    levels: tuple[FloatImage, ...]

    def __len__(self):
        return len(self.levels)

    def __getitem__(self, k: int) -> FloatImage:
        return self.levels[k]


# ---------------------------------------------------------------------------
# PGM / PPM


_HEADER_TOKEN = re.compile(rb"\s*(#[^\n]*\n\s*)*")


def _parse_pnm_header(buf: bytes, path=None) -> tuple[bytes, int, int, int, int]:
    if len(buf) < 2:
        raise ImageFormatError("file too short for a PNM magic number", 0, path)
    magic = buf[:2]
    if magic not in (b"P5", b"P6"):
        raise ImageFormatError(f"unsupported magic {magic!r}, expected P5 or P6", 0, path)
    pos = 2
    values = []
    for name in ("width", "height", "maxval"):
        if pos >= len(buf) or not buf[pos : pos + 1].isspace():
            raise ImageFormatError(f"expected whitespace before {name}", pos, path)
        pos = _HEADER_TOKEN.match(buf, pos).end()
        start = pos
        while pos < len(buf) and buf[pos : pos + 1].isdigit():
            pos += 1
        if start == pos:
            raise ImageFormatError(f"missing {name}", start, path)
        values.append(int(buf[start:pos]))
    if pos >= len(buf) or not buf[pos : pos + 1].isspace():
        raise ImageFormatError("expected single whitespace after maxval", pos, path)
    pos += 1
    width, height, maxval = values
    if width < 1 or height < 1:
        raise ImageFormatError(f"invalid dimensions {width}x{height}", 2, path)
    if maxval != 255:
        raise ImageFormatError(f"maxval {maxval} unsupported, only 255", pos - 1, path)
    return magic, width, height, maxval, pos


def rgb_to_luma(rgb: np.ndarray) -> np.ndarray:
    """Integer-rounded Rec.601 luminance of an (..., 3) uint8 array."""
    rgb = rgb.astype(np.int32)
    acc = _LUMA_R * rgb[..., 0] + _LUMA_G * rgb[..., 1] + _LUMA_B * rgb[..., 2]
    return ((acc + 500) // 1000).astype(np.uint8)


def decode_pnm(buf: bytes, path=None) -> GrayImage:
    magic, width, height, _, pos = _parse_pnm_header(buf, path)
    channels = 3 if magic == b"P6" else 1
    need = width * height * channels
    payload = buf[pos : pos + need]
    if len(payload) < need:
        raise ImageFormatError(
            f"truncated payload: need {need} bytes, have {len(payload)}", pos + len(payload), path
        )
    arr = np.frombuffer(payload, dtype=np.uint8)
    if channels == 1:
        return GrayImage(arr.reshape(height, width))
    return GrayImage(rgb_to_luma(arr.reshape(height, width, 3)))


def load_image(path: str | os.PathLike) -> GrayImage:
    """Read a binary PGM (P5) or PPM (P6) file as luminance."""
    with open(path, "rb") as fh:
        buf = fh.read()
    return decode_pnm(buf, path)


def encode_pgm(img: GrayImage) -> bytes:
    return b"P5\n%d %d\n255\n" % (img.width, img.height) + img.pixels.tobytes()


def encode_ppm(rgb: np.ndarray) -> bytes:
    rgb = np.ascontiguousarray(rgb, dtype=np.uint8)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise ValueError(f"expected (h, w, 3) array, got {rgb.shape}")
    return b"P6\n%d %d\n255\n" % (rgb.shape[1], rgb.shape[0]) + rgb.tobytes()


def _write(path, payload: bytes) -> None:
    try:
        with open(path, "wb") as fh:
            fh.write(payload)
    except OSError as exc:
        raise OSError(f"cannot write image to {path}: {exc.strerror or exc}") from exc


def save_image(img: GrayImage, path: str | os.PathLike) -> None:
    _write(path, encode_pgm(img))


def save_ppm(rgb: np.ndarray, path: str | os.PathLike) -> None:
    _write(path, encode_ppm(rgb))


def load_ppm_rgb(path: str | os.PathLike) -> np.ndarray:
    """Read a P6 file without luminance conversion."""
    with open(path, "rb") as fh:
        buf = fh.read()
    magic, width, height, _, pos = _parse_pnm_header(buf, path)
    if magic != b"P6":
        raise ImageFormatError("expected a P6 file", 0, path)
    need = width * height * 3
    if len(buf) - pos < need:
        raise ImageFormatError("truncated payload", len(buf), path)
    return np.frombuffer(buf[pos : pos + need], dtype=np.uint8).reshape(height, width, 3).copy()


# ---------------------------------------------------------------------------
# Y4M


def iter_y4m(path: str | os.PathLike) -> Iterator[GrayImage]:
    """Yield the luma plane of each frame of an uncompressed C420 or Cmono stream."""
    with open(path, "rb") as fh:
        header = fh.readline()
        if not header.startswith(b"YUV4MPEG2 "):
            raise ImageFormatError("missing YUV4MPEG2 signature", 0, path)
        width = height = None
        colorspace = b"420"
        for tok in header.split()[1:]:
            key, val = tok[:1], tok[1:]
            if key == b"W":
                width = int(val)
            elif key == b"H":
                height = int(val)
            elif key == b"C":
                colorspace = val
        if width is None or height is None:
            raise ImageFormatError("Y4M header lacks W/H", 0, path)
        if colorspace.startswith(b"420"):
            chroma = 2 * ((width + 1) // 2) * ((height + 1) // 2)
        elif colorspace == b"mono":
            chroma = 0
        else:
            raise ImageFormatError(f"unsupported Y4M colorspace C{colorspace.decode()}", 0, path)
        luma = width * height
        offset = len(header)
        while True:
            tag = fh.readline()
            if not tag:
                return
            if not tag.startswith(b"FRAME"):
                raise ImageFormatError("expected FRAME marker", offset, path)
            offset += len(tag)
            plane = fh.read(luma)
            if len(plane) < luma:
                raise ImageFormatError("truncated Y4M frame", offset + len(plane), path)
            skipped = fh.read(chroma)
            if len(skipped) < chroma:
                raise ImageFormatError("truncated Y4M chroma", offset + luma + len(skipped), path)
            offset += luma + chroma
            yield GrayImage(np.frombuffer(plane, dtype=np.uint8).reshape(height, width))


def write_y4m(frames: Sequence[GrayImage], path: str | os.PathLike, fps: int = 30) -> None:
    """Write frames as a Cmono Y4M stream."""
    if not frames:
        raise ValueError("no frames to write")
    w, h = frames[0].width, frames[0].height
    with open(path, "wb") as fh:
        fh.write(b"YUV4MPEG2 W%d H%d F%d:1 Ip A1:1 Cmono\n" % (w, h, fps))
        for img in frames:
            fh.write(b"FRAME\n")
            fh.write(img.pixels.tobytes())


def iter_sequence(source: str | os.PathLike) -> Iterator[QuadFrame]:
    """Quad frames from a Y4M file or a directory of numbered PGM/PPM files."""
    src = Path(source)
    if src.is_dir():
        files = sorted(
            (p for p in src.iterdir() if p.suffix.lower() in (".pgm", ".ppm")),
            key=lambda p: (len(p.stem), p.stem),
        )
        images: Iterator[GrayImage] = (load_image(p) for p in files)
    elif src.suffix.lower() == ".y4m":
        images = iter_y4m(src)
    else:
        raise ValueError(f"unsupported input {source}: expected a directory or .y4m file")
    for k, img in enumerate(images):
        yield QuadFrame(img, frame_index=k, timestamp_us=round(k * 1e6 / 30))


# ---------------------------------------------------------------------------
# Quad view


def merge_quad(front: GrayImage, back: GrayImage, left: GrayImage, right: GrayImage,
               frame_index: int = 0, timestamp_us: int = 0) -> QuadFrame:
    tiles = {"front": front, "back": back, "left": left, "right": right}
    w, h = front.width, front.height
    for name, tile in tiles.items():
        if (tile.width, tile.height) != (w, h):
            raise ValueError(
                f"camera '{name}' is {tile.width}x{tile.height}, expected {w}x{h} (front)"
            )
    out = np.empty((2 * h, 2 * w), dtype=np.uint8)
    for name, tile in tiles.items():
        r, c = TILE_POSITION[name]
        out[r * h : (r + 1) * h, c * w : (c + 1) * w] = tile.pixels
    return QuadFrame(GrayImage(out), frame_index=frame_index, timestamp_us=timestamp_us)


def split_quad(frame: QuadFrame) -> dict[str, GrayImage]:
    h, w = frame.height // 2, frame.width // 2
    px = frame.image.pixels
    return {
        name: GrayImage(px[r * h : (r + 1) * h, c * w : (c + 1) * w])
        for name, (r, c) in TILE_POSITION.items()
    }


# ---------------------------------------------------------------------------
# Float images, pyramids, sampling


def to_float(img: GrayImage) -> FloatImage:
    return FloatImage(img.pixels.astype(np.float32))


def downsample2(arr: np.ndarray) -> np.ndarray:
    """2x2 box filter; a trailing odd row/column is dropped."""
    h, w = arr.shape[0] // 2, arr.shape[1] // 2
    a = arr[: 2 * h, : 2 * w]
    return 0.25 * (a[0::2, 0::2] + a[0::2, 1::2] + a[1::2, 0::2] + a[1::2, 1::2])


def build_pyramid(img: FloatImage | GrayImage, max_levels: int) -> Pyramid:
    """Box-filtered pyramid; stops before any level would drop below 8 px."""
    if max_levels < 1:
        raise ValueError("max_levels must be >= 1")
    if isinstance(img, GrayImage):
        img = to_float(img)
    levels = [img]
    while len(levels) < max_levels:
        cur = levels[-1].pixels
        if min(cur.shape[0] // 2, cur.shape[1] // 2) < PYRAMID_MIN_DIM:
            break
        levels.append(FloatImage(downsample2(cur)))
    return Pyramid(tuple(levels))


def sample_bilinear(img: FloatImage, x: float, y: float) -> float:
    return float(sample_bilinear_many(img.pixels, np.array([x]), np.array([y]))[0])


def sample_bilinear_many(arr: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Vectorised bilinear lookup; coordinates are clamped to the raster."""
    h, w = arr.shape
    xs = np.clip(xs, 0.0, w - 1)
    ys = np.clip(ys, 0.0, h - 1)
    x0 = np.minimum(np.floor(xs).astype(np.intp), max(w - 2, 0))
    y0 = np.minimum(np.floor(ys).astype(np.intp), max(h - 2, 0))
    fx = xs - x0
    fy = ys - y0
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    top = arr[y0, x0] * (1 - fx) + arr[y0, x1] * fx
    bot = arr[y1, x0] * (1 - fx) + arr[y1, x1] * fx
    return top * (1 - fy) + bot * fy


def resize_bilinear(arr: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Resample a 2-D array with pixel-centre-aligned bilinear interpolation."""
    arr = np.asarray(arr, dtype=np.float64)
    h, w = arr.shape
    ys = (np.arange(out_h) + 0.5) * (h / out_h) - 0.5
    xs = (np.arange(out_w) + 0.5) * (w / out_w) - 0.5
    gx, gy = np.meshgrid(xs, ys)
    return sample_bilinear_many(arr, gx.ravel(), gy.ravel()).reshape(out_h, out_w)
