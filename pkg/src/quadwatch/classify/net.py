"""ToyNet: a small depthwise-separable classifier trained with plain gradient descent."""

from __future__ import annotations

import io
import logging
import os
import struct
from typing import Iterable, Sequence

import numpy as np

from ..imgcore import GrayImage, QuadFrame, resize_bilinear
from ..labels import DEFAULT_CLASS_NAMES, ClassLabel
from ..roi import RoiConfig
from .layers import (
    LAYER_TYPES,
    PROB_FLOOR,
    Conv,
    Dense,
    DepthwiseConv,
    GlobalAvgPool,
    Layer,
    PointwiseConv,
    ReLU,
    Standardize,
    softmax,
)

WEIGHT_MAGIC = b"TNW1"

log = logging.getLogger(__name__)


class ToyNet:
    """Ordered layer chain ending in logits; ``forward`` adds the softmax."""

    def __init__(self, layers: Sequence[Layer], class_names: Sequence[str], input_side: int = 32):
        self.layers = list(layers)
        self.class_names = tuple(class_names)
        self.input_side = input_side
        if self.in_channels not in (1, 3):
            raise ValueError(f"ToyNet takes 1 or 3 input channels, got {self.in_channels}")
        self.n_params = self.param_count()
        log.debug("ToyNet: %d layers, %d parameters, %d classes", len(self.layers), self.n_params, self.n_classes)

    @classmethod
    def build(cls, class_names: Sequence[str] = DEFAULT_CLASS_NAMES, *, in_channels: int = 1,
              input_side: int = 32, stem_width: int = 8, widths: Sequence[int] = (16, 32, 64),
              seed: int | None = 0, zero: bool = False) -> "ToyNet":
        """Standardize, 3x3 stem, one (depthwise 3x3 stride 2 -> pointwise) block per width, pool, dense."""
        rng = np.random.default_rng(seed)

        def init(shape, fan_in):
            if zero:
                return np.zeros(shape)
            return rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape)

        layers: list[Layer] = [Standardize(), Conv(init((stem_width, in_channels, 3, 3), 9 * in_channels),
                                    np.zeros(stem_width)), ReLU()]
        c = stem_width
        for w in widths:
            layers += [
                DepthwiseConv(init((c, 3, 3), 9), np.zeros(c), stride=2), ReLU(),
                PointwiseConv(init((w, c), c), np.zeros(w)), ReLU(),
            ]
            c = w
        k = len(class_names)
        layers += [GlobalAvgPool(), Dense(init((k, c), c) if not zero else np.zeros((k, c)), np.zeros(k))]
        return cls(layers, class_names, input_side)

    @property
    def in_channels(self) -> int:
        first = next(layer for layer in self.layers if hasattr(layer, "weight"))
        return first.weight.shape[1]

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    @property
    def feature_width(self) -> int:
        return self.layers[-1].weight.shape[1]

    @property
    def labels(self) -> tuple[ClassLabel, ...]:
        return tuple(ClassLabel(i, n) for i, n in enumerate(self.class_names))

    def param_count(self) -> int:
        return sum(p.size for layer in self.layers for p in layer.params().values())

    def parameters(self) -> Iterable[tuple[Layer, str, np.ndarray]]:
        for layer in self.layers:
            for name, arr in layer.params().items():
                yield layer, name, arr

    def logits(self, x: np.ndarray) -> np.ndarray:
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        """Class probabilities for a (B, C, S, S) batch from ``prepare_input``."""
        return softmax(self.logits(np.asarray(x, dtype=np.float64)))

    def backward(self, grad_logits: np.ndarray) -> None:
        g = grad_logits
        for layer in reversed(self.layers):
            g = layer.backward(g)

    def copy(self) -> "ToyNet":
        return load_weights_bytes(weights_to_bytes(self))


def prepare_input(images, side: int, channels: int = 1) -> np.ndarray:
    """Stack images into a (B, C, side, side) batch scaled to [0, 1].

    Accepts GrayImages or 2-D arrays of any size; sizes other than ``side`` are
    resampled bilinearly.
    """
    if isinstance(images, np.ndarray) and images.ndim == 2:
        images = [images]
    if isinstance(images, GrayImage):
        images = [images]
    batch = []
    for img in images:
        arr = img.pixels if isinstance(img, GrayImage) else np.asarray(img)
        arr = arr.astype(np.float64)
        if arr.shape != (side, side):
            arr = resize_bilinear(arr, side, side)
        batch.append(arr / 255.0)
    out = np.stack(batch)[:, None]
    if channels == 3:
        out = np.repeat(out, 3, axis=1)
    return out


def forward(net: ToyNet, roi_image) -> np.ndarray:
    """Probability vector for one ROI crop."""
    return net.predict_proba(prepare_input([roi_image], net.input_side, net.in_channels))[0]


def backward_and_step(net: ToyNet, batch: Sequence[tuple[object, int]], learning_rate: float) -> float:
    """One gradient-descent step on mean cross-entropy; returns the pre-step loss."""
    if not batch:
        raise ValueError("empty batch")
    images = [b[0] for b in batch]
    targets = np.array([getattr(b[1], "id", b[1]) for b in batch], dtype=np.intp)
    x = prepare_input(images, net.input_side, net.in_channels)
    return step_arrays(net, x, targets, learning_rate)


def loss_and_grads(net: ToyNet, x: np.ndarray, targets: np.ndarray) -> float:
    """Mean cross-entropy of a prepared batch; leaves gradients on each layer."""
    if np.any((targets < 0) | (targets >= net.n_classes)):
        raise ValueError(f"targets must lie in 0..{net.n_classes - 1}")
    probs = softmax(net.logits(x))
    n = len(targets)
    picked = probs[np.arange(n), targets]
    loss = float(-np.log(np.maximum(picked, PROB_FLOOR)).mean())
    if not np.isfinite(loss):
        raise FloatingPointError(f"non-finite loss {loss}; step aborted")
    grad = probs.copy()
    grad[np.arange(n), targets] -= 1.0
    net.backward(grad / n)
    return loss


def step_arrays(net: ToyNet, x: np.ndarray, targets: np.ndarray, learning_rate: float) -> float:
    loss = loss_and_grads(net, x, targets)
    if learning_rate != 0:
        for layer, name, arr in net.parameters():
            arr -= learning_rate * layer.grads[name]
    return loss


def classify_rois(net: ToyNet, frame: QuadFrame, config: RoiConfig,
                  selected: Iterable[int]) -> dict[int, tuple[ClassLabel, float]]:
    """Crop, resize and classify the selected ROIs; one forward pass per ROI."""
    chosen = sorted(set(selected))
    for k in chosen:
        if not 0 <= k < len(config):
            raise ValueError(f"ROI index {k} out of range")
    if not chosen:
        return {}
    crops = [frame.image.pixels[config[k].slices()] for k in chosen]
    probs = net.predict_proba(prepare_input(crops, net.input_side, net.in_channels))
    best = probs.argmax(axis=1)
    labels = net.labels
    return {k: (labels[int(c)], float(p[c])) for k, c, p in zip(chosen, best, probs)}


# ---------------------------------------------------------------------------
# weight file: "TNW1", u32 layer count, per layer u8 tag, u8 stride, u8 tensor
# count, per tensor u8 ndim + u32 dims + float64 data; then u32 class count and
# per class u16 byte length + UTF-8 name; finally u32 input side. Little-endian.


def _write_tensor(buf: io.BytesIO, arr: np.ndarray) -> None:
    buf.write(struct.pack("<B", arr.ndim))
    buf.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
    buf.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def weights_to_bytes(net: ToyNet) -> bytes:
    buf = io.BytesIO()
    buf.write(WEIGHT_MAGIC)
    buf.write(struct.pack("<I", len(net.layers)))
    for layer in net.layers:
        tensors = list(layer.params().values())
        buf.write(struct.pack("<BBB", layer.tag, layer.stride, len(tensors)))
        for t in tensors:
            _write_tensor(buf, t)
    buf.write(struct.pack("<I", len(net.class_names)))
    for name in net.class_names:
        raw = name.encode("utf-8")
        buf.write(struct.pack("<H", len(raw)) + raw)
    buf.write(struct.pack("<I", net.input_side))
    return buf.getvalue()


class WeightFormatError(ValueError):
    pass


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise WeightFormatError(f"weight file truncated at byte {self.pos}")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_weights_bytes(data: bytes) -> ToyNet:
    r = _Reader(data)
    if r.take(4) != WEIGHT_MAGIC:
        raise WeightFormatError("bad magic, expected TNW1")
    (n_layers,) = r.unpack("<I")
    layers: list[Layer] = []
    for _ in range(n_layers):
        tag, stride, n_tensors = r.unpack("<BBB")
        if tag not in LAYER_TYPES:
            raise WeightFormatError(f"unknown layer tag {tag}")
        tensors = []
        for _ in range(n_tensors):
            (ndim,) = r.unpack("<B")
            shape = r.unpack(f"<{ndim}I")
            count = int(np.prod(shape)) if ndim else 1
            tensors.append(np.frombuffer(r.take(8 * count), dtype="<f8").reshape(shape).astype(np.float64))
        cls = LAYER_TYPES[tag]
        if cls in (Conv, DepthwiseConv):
            layers.append(cls(*tensors, stride=stride))
        elif cls in (PointwiseConv, Dense):
            layers.append(cls(*tensors))
        else:
            layers.append(cls())
    (n_names,) = r.unpack("<I")
    names = []
    for _ in range(n_names):
        (length,) = r.unpack("<H")
        names.append(r.take(length).decode("utf-8"))
    (side,) = r.unpack("<I")
    if r.pos != len(data):
        raise WeightFormatError(f"{len(data) - r.pos} trailing bytes after weights")
    return ToyNet(layers, names, side)


def save_weights(net: ToyNet, path: str | os.PathLike) -> None:
    with open(path, "wb") as fh:
        fh.write(weights_to_bytes(net))


def load_weights(path: str | os.PathLike) -> ToyNet:
    with open(path, "rb") as fh:
        return load_weights_bytes(fh.read())
