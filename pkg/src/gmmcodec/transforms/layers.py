"""Forward-only building blocks on [C, H, W] numpy arrays."""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import GeometryError, NumericError

LEAKY_SLOPE = 0.01


def conv2d(x, weight, bias=None, stride: int = 1, padding: int | None = None):
    """Cross-correlation with zero padding ("same" size at stride 1 by default)."""
    c, h, w = x.shape
    out_c, in_c, kh, kw = weight.shape
    if in_c != c:
        raise GeometryError(f"conv expects {in_c} input channels, got {c}")
    if padding is None:
        padding = kh // 2
    if kh == 1 and kw == 1 and padding == 0:
        xs = x[:, ::stride, ::stride]
        out = weight.reshape(out_c, in_c) @ xs.reshape(c, -1)
        out = out.reshape(out_c, xs.shape[1], xs.shape[2])
    else:
        xp = np.pad(x, ((0, 0), (padding, padding), (padding, padding)))
        win = sliding_window_view(xp, (kh, kw), axis=(1, 2))[:, ::stride, ::stride]
        oh, ow = win.shape[1], win.shape[2]
        cols = win.transpose(1, 2, 0, 3, 4).reshape(oh * ow, c * kh * kw)
        out = (cols @ weight.reshape(out_c, -1).T).T.reshape(out_c, oh, ow)
    if bias is not None:
        out = out + bias.reshape(-1, 1, 1).astype(out.dtype, copy=False)
    return out


def leaky_relu(x, slope: float = LEAKY_SLOPE):
    return np.where(x >= 0, x, x * np.asarray(slope, dtype=x.dtype))


def sigmoid(x):
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def pixel_shuffle(x, r: int):
    """[C*r*r, H, W] -> [C, H*r, W*r]; channel c*r*r + i*r + j lands at (h*r+i, w*r+j)."""
    cr2, h, w = x.shape
    if cr2 % (r * r):
        raise GeometryError(f"{cr2} channels not divisible by {r * r}")
    c = cr2 // (r * r)
    return x.reshape(c, r, r, h, w).transpose(0, 3, 1, 4, 2).reshape(c, h * r, w * r)


def pixel_unshuffle(x, r: int):
    c, hr, wr = x.shape
    if hr % r or wr % r:
        raise GeometryError(f"spatial dims {hr}x{wr} not divisible by {r}")
    h, w = hr // r, wr // r
    return x.reshape(c, h, r, w, r).transpose(0, 2, 4, 1, 3).reshape(c * r * r, h, w)


def context_mask(kernel_size: int = 5) -> np.ndarray:
    """Type-A mask: 1 strictly before the centre tap in raster order, 0 elsewhere."""
    m = np.zeros((kernel_size, kernel_size))
    centre = kernel_size // 2
    m[:centre, :] = 1.0
    m[centre, :centre] = 1.0
    return m


def check_finite(x, layer: str):
    if not np.all(np.isfinite(x)):
        raise NumericError("non-finite activation", layer=layer)
    return x
