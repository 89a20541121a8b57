"""Convolution primitives with multiply-accumulate accounting, plus trainable layers.

Feature maps are float64 arrays shaped (channels, height, width) or batched
(batch, channels, height, width). Kernels are (out, in, kh, kw) for standard
convolution, (channels, kh, kw) for depthwise and (out, in) for pointwise.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np


@dataclass(frozen=True)
class ConvSpec:
    d_k: int
    n_in: int
    n_out: int
    d_f: int
    stride: int = 1
    padding: int = 0

    def __post_init__(self):
        if self.d_k % 2 != 1:
            raise ValueError(f"kernel size d_k must be odd, got {self.d_k}")
        for name in ("d_k", "n_in", "n_out", "d_f", "stride"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.padding < 0:
            raise ValueError("padding must be >= 0")

    @classmethod
    def for_input(cls, d_k: int, n_in: int, n_out: int, size: int, stride: int = 1,
                  padding: int | None = None) -> "ConvSpec":
        padding = d_k // 2 if padding is None else padding
        return cls(d_k, n_in, n_out, (size + 2 * padding - d_k) // stride + 1, stride, padding)


class MacCounter:
    """Tally of multiply-accumulates actually issued by the convolution loops."""

    def __init__(self):
        self.macs = 0

    def add(self, n: int) -> None:
        self.macs += int(n)


def flops_standard(spec: ConvSpec) -> int:
    return spec.d_k**2 * spec.n_in * spec.n_out * spec.d_f**2


def flops_separable(spec: ConvSpec) -> int:
    return spec.d_k**2 * spec.n_in * spec.d_f**2 + spec.n_in * spec.n_out * spec.d_f**2


def reduction_ratio(spec: ConvSpec) -> Fraction:
    """Exact cost of the separable factorisation relative to the standard convolution."""
    return Fraction(flops_separable(spec), flops_standard(spec))


def _batched(x: np.ndarray) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 3:
        return x[None], True
    if x.ndim != 4:
        raise ValueError(f"expected (C, H, W) or (B, C, H, W) input, got shape {x.shape}")
    return x, False


def _out_size(n: int, k: int, stride: int, padding: int) -> int:
    out = (n + 2 * padding - k) // stride + 1
    if out < 1:
        raise ValueError(f"input size {n} too small for kernel {k} with padding {padding}")
    return out


def _pad(x: np.ndarray, p: int) -> np.ndarray:
    return np.pad(x, ((0, 0), (0, 0), (p, p), (p, p))) if p else x


def _check_spec(spec: ConvSpec | None, d_k: int, n_in: int, n_out: int, ho: int):
    if spec is None:
        return
    if (spec.d_k, spec.n_in, spec.n_out) != (d_k, n_in, n_out):
        raise ValueError(
            f"spec (d_k={spec.d_k}, n_in={spec.n_in}, n_out={spec.n_out}) does not match "
            f"kernel (d_k={d_k}, n_in={n_in}, n_out={n_out})"
        )
    if spec.d_f != ho:
        raise ValueError(f"spec d_f={spec.d_f} but convolution yields {ho}")


def conv2d(x, kernel, bias=None, spec: ConvSpec | None = None, *, stride: int | None = None,
           padding: int | None = None, counter: MacCounter | None = None) -> np.ndarray:
    """Direct zero-padded convolution (cross-correlation) with per-channel bias."""
    xb, single = _batched(x)
    kernel = np.asarray(kernel, dtype=np.float64)
    if kernel.ndim != 4:
        raise ValueError(f"kernel must be (out, in, kh, kw), got {kernel.shape}")
    n_out, n_in, kh, kw = kernel.shape
    if xb.shape[1] != n_in:
        raise ValueError(f"input has {xb.shape[1]} channels, kernel expects {n_in}")
    s = stride if stride is not None else (spec.stride if spec else 1)
    p = padding if padding is not None else (spec.padding if spec else 0)
    ho = _out_size(xb.shape[2], kh, s, p)
    wo = _out_size(xb.shape[3], kw, s, p)
    if spec is not None and kh == kw:
        _check_spec(spec, kh, n_in, n_out, ho)
    xp = _pad(xb, p)
    out = np.zeros((xb.shape[0], n_out, ho, wo))
    for i in range(kh):
        for j in range(kw):
            patch = xp[:, :, i : i + s * ho : s, j : j + s * wo : s]
            out += np.einsum("oc,bchw->bohw", kernel[:, :, i, j], patch)
            if counter is not None:
                counter.add(xb.shape[0] * n_out * n_in * ho * wo)
    if bias is not None:
        out += np.asarray(bias, dtype=np.float64)[None, :, None, None]
    return out[0] if single else out


def depthwise_conv2d(x, kernel, bias=None, spec: ConvSpec | None = None, *, stride: int | None = None,
                     padding: int | None = None, counter: MacCounter | None = None) -> np.ndarray:
    """One spatial filter per input channel; channel count is preserved."""
    xb, single = _batched(x)
    kernel = np.asarray(kernel, dtype=np.float64)
    if kernel.ndim != 3:
        raise ValueError(f"depthwise kernel must be (channels, kh, kw), got {kernel.shape}")
    c, kh, kw = kernel.shape
    if xb.shape[1] != c:
        raise ValueError(f"input has {xb.shape[1]} channels, depthwise kernel has {c}")
    s = stride if stride is not None else (spec.stride if spec else 1)
    p = padding if padding is not None else (spec.padding if spec else 0)
    ho = _out_size(xb.shape[2], kh, s, p)
    wo = _out_size(xb.shape[3], kw, s, p)
    if spec is not None and spec.d_k != kh:
        raise ValueError(f"spec d_k={spec.d_k} does not match kernel {kh}")
    xp = _pad(xb, p)
    out = np.zeros((xb.shape[0], c, ho, wo))
    for i in range(kh):
        for j in range(kw):
            out += kernel[None, :, i, j, None, None] * xp[:, :, i : i + s * ho : s, j : j + s * wo : s]
            if counter is not None:
                counter.add(xb.shape[0] * c * ho * wo)
    if bias is not None:
        out += np.asarray(bias, dtype=np.float64)[None, :, None, None]
    return out[0] if single else out


def pointwise_conv2d(x, kernel, bias=None, spec: ConvSpec | None = None, *,
                     counter: MacCounter | None = None) -> np.ndarray:
    """1x1 convolution: per-pixel channel mixing by an (out, in) matrix."""
    xb, single = _batched(x)
    kernel = np.asarray(kernel, dtype=np.float64)
    if kernel.ndim == 4 and kernel.shape[2:] == (1, 1):
        kernel = kernel[:, :, 0, 0]
    if kernel.ndim != 2:
        raise ValueError(f"pointwise kernel must be (out, in), got {kernel.shape}")
    if xb.shape[1] != kernel.shape[1]:
        raise ValueError(f"input has {xb.shape[1]} channels, pointwise kernel expects {kernel.shape[1]}")
    out = np.einsum("oc,bchw->bohw", kernel, xb)
    if counter is not None:
        counter.add(xb.shape[0] * kernel.shape[0] * kernel.shape[1] * xb.shape[2] * xb.shape[3])
    if bias is not None:
        out += np.asarray(bias, dtype=np.float64)[None, :, None, None]
    return out[0] if single else out


def separable_conv2d(x, depth_kernel, point_kernel, spec: ConvSpec, counter: MacCounter | None = None,
                     depth_bias=None, point_bias=None) -> np.ndarray:
    mid = depthwise_conv2d(x, depth_kernel, depth_bias, spec, counter=counter)
    return pointwise_conv2d(mid, point_kernel, point_bias, counter=counter)


def relu(t) -> np.ndarray:
    return np.maximum(np.asarray(t, dtype=np.float64), 0.0)


def softmax(logits) -> np.ndarray:
    """Max-shifted softmax over the last axis."""
    z = np.asarray(logits, dtype=np.float64)
    if z.shape[-1] < 2:
        raise ValueError("softmax needs at least two categories")
    if not np.all(np.isfinite(z)):
        raise ValueError("softmax input contains non-finite values")
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


PROB_FLOOR = 1e-12


def cross_entropy(probs, target: int) -> float:
    probs = np.asarray(probs, dtype=np.float64)
    target = getattr(target, "id", target)
    if not 0 <= int(target) < probs.shape[-1]:
        raise ValueError(f"target class {target} outside 0..{probs.shape[-1] - 1}")
    return float(-np.log(max(probs[int(target)], PROB_FLOOR)))


# ---------------------------------------------------------------------------
# trainable layers


class Layer:
    tag = 0
    stride = 1

    def params(self) -> dict[str, np.ndarray]:
        return {}

    def forward(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class Conv(Layer):
    tag = 1

    def __init__(self, weight: np.ndarray, bias: np.ndarray, stride: int = 1):
        self.weight = np.asarray(weight, dtype=np.float64)
        self.bias = np.asarray(bias, dtype=np.float64)
        self.stride = stride
        self.grads: dict[str, np.ndarray] = {}

    @property
    def padding(self) -> int:
        return self.weight.shape[2] // 2

    def params(self):
        return {"weight": self.weight, "bias": self.bias}

    def forward(self, x):
        self._x = x
        return conv2d(x, self.weight, self.bias, stride=self.stride, padding=self.padding)

    def backward(self, g):
        x, s, p = self._x, self.stride, self.padding
        _, _, kh, kw = self.weight.shape
        xp = _pad(x, p)
        dxp = np.zeros_like(xp)
        dw = np.zeros_like(self.weight)
        ho, wo = g.shape[2:]
        for i in range(kh):
            for j in range(kw):
                sl = (slice(None), slice(None), slice(i, i + s * ho, s), slice(j, j + s * wo, s))
                dw[:, :, i, j] = np.einsum("bohw,bchw->oc", g, xp[sl])
                dxp[sl] += np.einsum("oc,bohw->bchw", self.weight[:, :, i, j], g)
        self.grads = {"weight": dw, "bias": g.sum(axis=(0, 2, 3))}
        return dxp[:, :, p : p + x.shape[2], p : p + x.shape[3]] if p else dxp


class DepthwiseConv(Layer):
    tag = 2

    def __init__(self, weight: np.ndarray, bias: np.ndarray, stride: int = 1):
        self.weight = np.asarray(weight, dtype=np.float64)
        self.bias = np.asarray(bias, dtype=np.float64)
        self.stride = stride
        self.grads: dict[str, np.ndarray] = {}

    @property
    def padding(self) -> int:
        return self.weight.shape[1] // 2

    def params(self):
        return {"weight": self.weight, "bias": self.bias}

    def forward(self, x):
        self._x = x
        return depthwise_conv2d(x, self.weight, self.bias, stride=self.stride, padding=self.padding)

    def backward(self, g):
        x, s, p = self._x, self.stride, self.padding
        _, kh, kw = self.weight.shape
        xp = _pad(x, p)
        dxp = np.zeros_like(xp)
        dw = np.zeros_like(self.weight)
        ho, wo = g.shape[2:]
        for i in range(kh):
            for j in range(kw):
                sl = (slice(None), slice(None), slice(i, i + s * ho, s), slice(j, j + s * wo, s))
                dw[:, i, j] = np.einsum("bchw,bchw->c", g, xp[sl])
                dxp[sl] += self.weight[None, :, i, j, None, None] * g
        self.grads = {"weight": dw, "bias": g.sum(axis=(0, 2, 3))}
        return dxp[:, :, p : p + x.shape[2], p : p + x.shape[3]] if p else dxp


class PointwiseConv(Layer):
    tag = 3

    def __init__(self, weight: np.ndarray, bias: np.ndarray):
        self.weight = np.asarray(weight, dtype=np.float64)
        self.bias = np.asarray(bias, dtype=np.float64)
        self.grads: dict[str, np.ndarray] = {}

    def params(self):
        return {"weight": self.weight, "bias": self.bias}

    def forward(self, x):
        self._x = x
        return pointwise_conv2d(x, self.weight, self.bias)

    def backward(self, g):
        self.grads = {
            "weight": np.einsum("bohw,bchw->oc", g, self._x),
            "bias": g.sum(axis=(0, 2, 3)),
        }
        return np.einsum("oc,bohw->bchw", self.weight, g)


class ReLU(Layer):
    tag = 4

    def forward(self, x):
        self._mask = x > 0
        return np.where(self._mask, x, 0.0)

    def backward(self, g):
        return g * self._mask


class Standardize(Layer):
    """Per-sample shift to zero mean and scale to unit standard deviation.

    Keeps scene brightness and contrast out of the learned filters; samples
    flatter than ``floor`` are only centred.
    """

    tag = 7
    floor = 1.0 / 255.0

    def forward(self, x):
        axes = tuple(range(1, x.ndim))
        centred = x - x.mean(axis=axes, keepdims=True)
        self._scale = np.maximum(centred.std(axis=axes, keepdims=True), self.floor)
        self._y = centred / self._scale
        self._flat = self._scale <= self.floor
        return self._y

    def backward(self, g):
        axes = tuple(range(1, g.ndim))
        g_mean = g.mean(axis=axes, keepdims=True)
        gy_mean = np.where(self._flat, 0.0, (g * self._y).mean(axis=axes, keepdims=True))
        return (g - g_mean - self._y * gy_mean) / self._scale


class GlobalAvgPool(Layer):
    tag = 5

    def forward(self, x):
        self._shape = x.shape
        return x.mean(axis=(2, 3))

    def backward(self, g):
        b, c, h, w = self._shape
        return np.broadcast_to(g[:, :, None, None] / (h * w), self._shape).copy()


class Dense(Layer):
    tag = 6

    def __init__(self, weight: np.ndarray, bias: np.ndarray):
        self.weight = np.asarray(weight, dtype=np.float64)  # (out, in)
        self.bias = np.asarray(bias, dtype=np.float64)
        self.grads: dict[str, np.ndarray] = {}

    def params(self):
        return {"weight": self.weight, "bias": self.bias}

    def forward(self, x):
        self._x = x
        return x @ self.weight.T + self.bias

    def backward(self, g):
        self.grads = {"weight": g.T @ self._x, "bias": g.sum(axis=0)}
        return g @ self.weight


LAYER_TYPES = {cls.tag: cls for cls in (Conv, DepthwiseConv, PointwiseConv, ReLU, GlobalAvgPool, Dense, Standardize)}
