"""Forward passes of the analysis/synthesis transforms, hyper networks,
masked context model and parameter fusion.

Large convolution stacks run in float32; context and fusion run in float64 so
that the per-position (serial) and full-tensor context paths agree to ~1e-12.
"""

from __future__ import annotations

import numpy as np

from ..entropy_models import MixtureParams
from ..errors import GeometryError
from .layers import check_finite, context_mask, conv2d, leaky_relu, pixel_shuffle, sigmoid
from .weights import CONTEXT_KERNEL, NetworkWeights

STACK_DTYPE = np.float32


def _conv(w, name, x, stride=1):
    return conv2d(x, w[f"{name}.weight"], w[f"{name}.bias"], stride=stride)


def residual_block(x, w, prefix: str):
    h = leaky_relu(_conv(w, f"{prefix}.conv1", x))
    return x + _conv(w, f"{prefix}.conv2", h)


def attention_forward(x, w, prefix: str):
    """Gated residual: x + trunk(x) * sigmoid(mask(x)), shape-preserving."""
    x = np.asarray(x)
    c = w[f"{prefix}.mask.out.weight"].shape[1]
    if x.ndim != 3 or x.shape[0] != c:
        raise GeometryError(f"{prefix}: expected [{c}, h, w] input, got {x.shape}")
    trunk = x
    for j in range(3):
        trunk = residual_block(trunk, w, f"{prefix}.trunk.res{j}")
    mask = x
    for j in range(3):
        mask = residual_block(mask, w, f"{prefix}.mask.res{j}")
    mask = _conv(w, f"{prefix}.mask.out", mask)
    return x + trunk * sigmoid(mask)


def _require_multiple(shape, m: int, what: str):
    if len(shape) != 3 or shape[1] % m or shape[2] % m or shape[1] == 0 or shape[2] == 0:
        raise GeometryError(f"{what}: spatial dims {tuple(shape[1:])} must be positive multiples of {m}")


def analysis_forward(x, w: NetworkWeights) -> np.ndarray:
    """Image [3, H, W] (H, W multiples of 64) -> latent [N, H/16, W/16]."""
    x = np.asarray(x)
    if x.ndim != 3 or x.shape[0] != 3:
        raise GeometryError(f"analysis expects [3, H, W], got {x.shape}")
    _require_multiple(x.shape, 64, "analysis")
    h = check_finite(x.astype(STACK_DTYPE), "input")
    for i in range(4):
        h = residual_block(h, w, f"g_a.{i}.res0")
        h = residual_block(h, w, f"g_a.{i}.res1")
        h = _conv(w, f"g_a.{i}.down", h, stride=2)
        if i < 3:
            h = leaky_relu(h)
        if i in (1, 3):
            h = attention_forward(h, w, f"g_a.attn{i}")
        check_finite(h, f"g_a.{i}")
    return h


def synthesis_forward(y_hat, w: NetworkWeights) -> np.ndarray:
    """Latent [N, h, w] -> image [3, 16h, 16w] clamped to [0, 1]."""
    y = np.asarray(y_hat)
    if y.ndim != 3 or y.shape[0] != w.N or y.shape[1] < 1 or y.shape[2] < 1:
        raise GeometryError(f"synthesis expects [{w.N}, h, w], got {y.shape}")
    h = attention_forward(y.astype(STACK_DTYPE), w, "g_s.attn0")
    for i in range(4):
        h = residual_block(h, w, f"g_s.{i}.res0")
        h = residual_block(h, w, f"g_s.{i}.res1")
        h = pixel_shuffle(_conv(w, f"g_s.{i}.up", h), 2)
        if i < 3:
            h = leaky_relu(h)
        if i == 1:
            h = attention_forward(h, w, "g_s.attn1")
        check_finite(h, f"g_s.{i}")
    return np.clip(h, 0.0, 1.0)


def hyper_analysis_forward(y, w: NetworkWeights) -> np.ndarray:
    """Latent [N, h, w] (h, w multiples of 4) -> side latent [N, h/4, w/4]."""
    y = np.asarray(y)
    if y.ndim != 3 or y.shape[0] != w.N:
        raise GeometryError(f"hyper analysis expects [{w.N}, h, w], got {y.shape}")
    _require_multiple(y.shape, 4, "hyper analysis")
    h = leaky_relu(_conv(w, "h_a.conv0", y.astype(STACK_DTYPE)))
    h = leaky_relu(_conv(w, "h_a.conv1", h, stride=2))
    h = leaky_relu(_conv(w, "h_a.conv2", h))
    h = _conv(w, "h_a.conv3", h, stride=2)
    return check_finite(h, "h_a")


def hyper_synthesis_forward(z_hat, w: NetworkWeights) -> np.ndarray:
    """Side latent [N, h, w] -> hyper features [2N, 4h, 4w]."""
    z = np.asarray(z_hat)
    if z.ndim != 3 or z.shape[0] != w.N or z.shape[1] < 1 or z.shape[2] < 1:
        raise GeometryError(f"hyper synthesis expects [{w.N}, h, w], got {z.shape}")
    h = leaky_relu(_conv(w, "h_s.conv0", z.astype(STACK_DTYPE)))
    h = leaky_relu(pixel_shuffle(_conv(w, "h_s.up1", h), 2))
    h = leaky_relu(_conv(w, "h_s.conv2", h))
    h = leaky_relu(pixel_shuffle(_conv(w, "h_s.up3", h), 2))
    h = _conv(w, "h_s.conv4", h)
    return check_finite(h, "h_s")


def _context_kernel(w) -> tuple[np.ndarray, np.ndarray]:
    k = np.asarray(w["context.conv.weight"], dtype=np.float64) * context_mask(CONTEXT_KERNEL)
    return k, np.asarray(w["context.conv.bias"], dtype=np.float64)


def context_full(y_hat, w) -> np.ndarray:
    """Masked 5x5 convolution over the whole latent: [N, h, w] -> [2N, h, w]."""
    k, b = _context_kernel(w)
    y = np.asarray(y_hat, dtype=np.float64)
    if y.ndim != 3 or y.shape[0] != k.shape[1]:
        raise GeometryError(f"context expects [{k.shape[1]}, h, w], got {y.shape}")
    return conv2d(y, k, b)


def context_forward(y_partial, position: tuple[int, int], w, decoded=None) -> np.ndarray:
    """Context features [2N] at ``position`` from raster-earlier latent values only.

    ``decoded``, if given, is a boolean [h, w] map of populated positions; a
    causal neighbour that is not yet populated raises ``RuntimeError``.
    """
    k, b = _context_kernel(w)
    y = np.asarray(y_partial, dtype=np.float64)
    if y.ndim != 3 or y.shape[0] != k.shape[1]:
        raise GeometryError(f"context expects [{k.shape[1]}, h, w], got {y.shape}")
    r = CONTEXT_KERNEL // 2
    i, j = position
    _, hh, ww = y.shape
    if not (0 <= i < hh and 0 <= j < ww):
        raise GeometryError(f"position {position} outside latent {hh}x{ww}")
    i0, i1 = max(i - r, 0), min(i + r + 1, hh)
    j0, j1 = max(j - r, 0), min(j + r + 1, ww)
    taps = k[:, :, i0 - i + r : i1 - i + r, j0 - j + r : j1 - j + r]
    if decoded is not None:
        need = context_mask(CONTEXT_KERNEL)[i0 - i + r : i1 - i + r, j0 - j + r : j1 - j + r] > 0
        if np.any(need & ~np.asarray(decoded)[i0:i1, j0:j1]):
            raise RuntimeError(f"context at {position} needs neighbours that are not decoded yet")
    patch = y[:, i0:i1, j0:j1]
    return taps.reshape(k.shape[0], -1) @ patch.reshape(-1) + b


def fusion_raw(hyper_features, context_features, w) -> np.ndarray:
    """Fusion network output before splitting: [3*N*K, ...]."""
    hf = np.asarray(hyper_features, dtype=np.float64)
    cf = np.asarray(context_features, dtype=np.float64)
    if hf.shape != cf.shape or hf.shape[0] != 2 * w.N:
        raise GeometryError(f"fusion inputs must both be [{2 * w.N}, ...], got {hf.shape} and {cf.shape}")
    spatial = hf.shape[1:]
    h = np.concatenate([hf, cf], axis=0).reshape(4 * w.N, -1)
    for i in range(3):
        wt = np.asarray(w[f"fusion.conv{i}.weight"], dtype=np.float64)
        bias = np.asarray(w[f"fusion.conv{i}.bias"], dtype=np.float64)
        h = wt.reshape(wt.shape[0], -1) @ h + bias[:, None]
        if i < 2:
            h = leaky_relu(h)
    check_finite(h, "fusion")
    return h.reshape((h.shape[0],) + spatial)


def split_mixture(raw, N: int, K: int) -> MixtureParams:
    """Split [3*N*K, ...] as (weight logits | means | log scales), each [K, N, ...]."""
    spatial = raw.shape[1:]
    parts = raw.reshape((3, K, N) + spatial)
    return MixtureParams.from_raw(parts[0], parts[1], parts[2])


def fusion_forward(hyper_features, context_features, w) -> MixtureParams:
    return split_mixture(fusion_raw(hyper_features, context_features, w), w.N, w.K)
