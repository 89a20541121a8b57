"""Slow, obviously-correct reference implementations used only by the tests.

Each one is written from the definition with plain loops so it shares no code
with the package under test.
"""

from __future__ import annotations

import math

import numpy as np


def conv2d_loops(x, kernel, bias=None, stride=1, padding=0):
    """Direct convolution (cross-correlation) over (B, C, H, W) input and (O, C, kh, kw) kernel."""
    b, c, h, w = x.shape
    o, c2, kh, kw = kernel.shape
    assert c == c2
    ho = (h + 2 * padding - kh) // stride + 1
    wo = (w + 2 * padding - kw) // stride + 1
    out = np.zeros((b, o, ho, wo))
    for n in range(b):
        for oc in range(o):
            for i in range(ho):
                for j in range(wo):
                    acc = 0.0 if bias is None else float(bias[oc])
                    for ic in range(c):
                        for u in range(kh):
                            for v in range(kw):
                                yy = i * stride + u - padding
                                xx = j * stride + v - padding
                                if 0 <= yy < h and 0 <= xx < w:
                                    acc += x[n, ic, yy, xx] * kernel[oc, ic, u, v]
                    out[n, oc, i, j] = acc
    return out


def block_diagonal(depthwise_kernel):
    """(C, kh, kw) per-channel kernels as a (C, C, kh, kw) kernel with zero off-channel taps."""
    c, kh, kw = depthwise_kernel.shape
    full = np.zeros((c, c, kh, kw))
    for k in range(c):
        full[k, k] = depthwise_kernel[k]
    return full


def macs_standard_loops(d_k, n_in, n_out, d_f):
    count = 0
    for _ in range(d_f * d_f):
        for _ in range(n_out):
            count += d_k * d_k * n_in
    return count


def dilate_loops(mask, radius):
    h, w = mask.shape
    out = np.zeros_like(mask, dtype=bool)
    for y in range(h):
        for x in range(w):
            hit = False
            for dy in range(-radius, radius + 1):
                for dx in range(-radius, radius + 1):
                    yy, xx = y + dy, x + dx
                    if 0 <= yy < h and 0 <= xx < w and mask[yy, xx]:
                        hit = True
            out[y, x] = hit
    return out


def bilinear_closed_form(p00, p10, p01, p11, fx, fy):
    """Value at (fx, fy) inside the unit cell with corners p(x, y)."""
    return p00 * (1 - fx) * (1 - fy) + p10 * fx * (1 - fy) + p01 * (1 - fx) * fy + p11 * fx * fy


def box_downsample_loops(arr):
    h, w = arr.shape[0] // 2, arr.shape[1] // 2
    out = np.zeros((h, w))
    for y in range(h):
        for x in range(w):
            out[y, x] = (arr[2 * y, 2 * x] + arr[2 * y, 2 * x + 1] + arr[2 * y + 1, 2 * x] + arr[2 * y + 1, 2 * x + 1]) / 4
    return out


def luma_hand(r, g, b):
    return int(math.floor(0.299 * r + 0.587 * g + 0.114 * b + 0.5))


def central_difference_grads(loss_fn, params, h=1e-5):
    """Numeric gradient of ``loss_fn()`` w.r.t. every entry of each array in ``params`` (mutated in place)."""
    grads = []
    for arr in params:
        g = np.zeros_like(arr)
        it = np.nditer(arr, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            old = arr[idx]
            arr[idx] = old + h
            up = loss_fn()
            arr[idx] = old - h
            down = loss_fn()
            arr[idx] = old
            g[idx] = (up - down) / (2 * h)
        grads.append(g)
    return grads


def textured_scene(rng, h=96, w=128, blob=4):
    """Smooth random texture: block noise upsampled and blurred by a 3x3 box, uint8."""
    coarse = rng.integers(0, 256, size=(h // blob + 2, w // blob + 2)).astype(float)
    up = np.kron(coarse, np.ones((blob, blob)))[:h + 2, :w + 2]
    out = np.zeros((h, w))
    for dy in range(3):
        for dx in range(3):
            out += up[dy : dy + h, dx : dx + w]
    return np.clip(np.rint(out / 9), 0, 255).astype(np.uint8)


def shift_image(arr, dx, dy):
    """Content moved by (dx, dy) with dx, dy multiples of 0.5; samples averaged for half steps."""
    def shifted(ix, iy):
        return np.roll(np.roll(arr.astype(float), iy, axis=0), ix, axis=1)

    xs = [math.floor(dx), math.ceil(dx)]
    ys = [math.floor(dy), math.ceil(dy)]
    acc = np.zeros(arr.shape)
    for ix in xs:
        for iy in ys:
            acc += shifted(ix, iy)
    return acc / 4


def scan_roi_membership(config, index, w, h):
    """Exhaustive pixel scan against plain rectangle arithmetic."""
    roi = config[index]
    return [(x, y) for y in range(h) for x in range(w)
            if roi.x <= x <= roi.x + roi.w - 1 and roi.y <= y <= roi.y + roi.h - 1]
