"""QWD1: the binary verdict message passed from detection to classification.

Layout, little-endian::

    magic        4  b"QWD1"
    version      1  currently 1
    frame_index  8  unsigned
    roi_bitmask  2  bit k set -> ROI k occupied (bits 12-15 must be 0)
    latched      2  bit k set -> ROI k held by the stopped-object latch
    label_count  1  <= 12
    labels       6 * label_count: roi u8, class_id u8, confidence float32

The header is 18 bytes, so a stream reader takes 18 bytes, then
``6 * label_count`` more. No length prefix is needed.
"""

from __future__ import annotations

import struct
from typing import BinaryIO, Iterator

import numpy as np

from .roi import N_ROIS
from .verdict import FrameVerdict, RoiMode

MAGIC = b"QWD1"
VERSION = 1
HEADER = struct.Struct("<4sBQHHB")
LABEL = struct.Struct("<BBf")
HEADER_SIZE = HEADER.size  # 18
LABEL_SIZE = LABEL.size  # 6
MAX_LABELS = N_ROIS
RESERVED_MASK = 0xFFFF & ~((1 << N_ROIS) - 1)


class WireError(ValueError):
    """Malformed QWD1 input. ``kind`` names the rejection class."""

    kind = "invalid"


class BadMagic(WireError):
    kind = "bad_magic"


class ShortRead(WireError):
    kind = "short_read"


class ReservedBits(WireError):
    kind = "reserved_bits"


class LabelCountExceeded(WireError):
    kind = "label_count"


class UnknownVersion(WireError):
    kind = "unknown_version"


def message_size(label_count: int) -> int:
    return HEADER_SIZE + LABEL_SIZE * label_count


def encode_message(v: FrameVerdict) -> bytes:
    if not 0 <= v.frame_index < 1 << 64:
        raise ValueError(f"frame_index {v.frame_index} does not fit in 64 bits")
    roi_bits = latched_bits = 0
    for roi, mode in v.occupied.items():
        if not 0 <= roi < N_ROIS:
            raise ValueError(f"ROI index {roi} out of range")
        roi_bits |= 1 << roi
        if mode is RoiMode.STOPPED_LATCHED:
            latched_bits |= 1 << roi
    if len(v.labels) > MAX_LABELS:
        raise ValueError(f"{len(v.labels)} labels, at most {MAX_LABELS} allowed")
    parts = [HEADER.pack(MAGIC, VERSION, v.frame_index, roi_bits, latched_bits, len(v.labels))]
    for roi in sorted(v.labels):
        class_id, conf = v.labels[roi]
        if not 0 <= roi < N_ROIS:
            raise ValueError(f"label ROI index {roi} out of range")
        if not 0 <= class_id <= 255:
            raise ValueError(f"class id {class_id} does not fit in a byte")
        parts.append(LABEL.pack(roi, class_id, conf))
    return b"".join(parts)


def _parse_header(head: bytes) -> tuple[int, int, int, int]:
    if len(head) < HEADER_SIZE:
        raise ShortRead(f"need {HEADER_SIZE} header bytes, got {len(head)}")
    magic, version, frame, roi_bits, latched_bits, count = HEADER.unpack(head[:HEADER_SIZE])
    if magic != MAGIC:
        raise BadMagic(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise UnknownVersion(f"unknown version {version}")
    if (roi_bits | latched_bits) & RESERVED_MASK:
        raise ReservedBits(f"reserved bits set: roi 0x{roi_bits:04x} latched 0x{latched_bits:04x}")
    if count > MAX_LABELS:
        raise LabelCountExceeded(f"label_count {count} exceeds {MAX_LABELS}")
    if latched_bits & ~roi_bits:
        raise WireError(f"latched bits 0x{latched_bits:04x} not a subset of occupied 0x{roi_bits:04x}")
    return frame, roi_bits, latched_bits, count


def _build(frame: int, roi_bits: int, latched_bits: int, body: bytes, count: int) -> FrameVerdict:
    occupied = {
        k: RoiMode.STOPPED_LATCHED if latched_bits >> k & 1 else RoiMode.MOVING
        for k in range(N_ROIS)
        if roi_bits >> k & 1
    }
    labels: dict[int, tuple[int, float]] = {}
    for i in range(count):
        roi, class_id, conf = LABEL.unpack_from(body, i * LABEL_SIZE)
        if roi >= N_ROIS:
            raise WireError(f"label {i}: ROI index {roi} out of range")
        if roi in labels:
            raise WireError(f"label {i}: duplicate ROI {roi}")
        labels[roi] = (class_id, conf)
    return FrameVerdict(frame, occupied, labels)


def decode_message(data: bytes) -> FrameVerdict:
    """Inverse of :func:`encode_message`; the buffer must hold exactly one message."""
    data = bytes(data)
    frame, roi_bits, latched_bits, count = _parse_header(data)
    need = message_size(count)
    if len(data) < need:
        raise ShortRead(f"message needs {need} bytes, got {len(data)}")
    if len(data) > need:
        raise WireError(f"{len(data) - need} trailing bytes after message")
    return _build(frame, roi_bits, latched_bits, data[HEADER_SIZE:], count)


def _read_exact(stream: BinaryIO, n: int) -> bytes:
    chunks = []
    got = 0
    while got < n:
        chunk = stream.read(n - got)
        if not chunk:
            break
        chunks.append(chunk)
        got += len(chunk)
    return b"".join(chunks)


def read_message(stream: BinaryIO) -> FrameVerdict | None:
    """Next message from a byte stream; None at a clean end of stream."""
    head = _read_exact(stream, HEADER_SIZE)
    if not head:
        return None
    frame, roi_bits, latched_bits, count = _parse_header(head)
    body = _read_exact(stream, LABEL_SIZE * count)
    if len(body) < LABEL_SIZE * count:
        raise ShortRead(f"stream ended inside labels of frame {frame}")
    return _build(frame, roi_bits, latched_bits, body, count)


def iter_messages(stream: BinaryIO) -> Iterator[FrameVerdict]:
    while (msg := read_message(stream)) is not None:
        yield msg


def as_wire_verdict(v: FrameVerdict) -> FrameVerdict:
    """The verdict as it comes back from the wire (confidences rounded to float32)."""
    labels = {k: (c, float(np.float32(p))) for k, (c, p) in v.labels.items()}
    return FrameVerdict(v.frame_index, dict(v.occupied), labels)
