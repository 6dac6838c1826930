"""PSNR, MS-SSIM and the rate-distortion objective.

MS-SSIM follows Wang et al.'s multi-scale definition: 11x11 Gaussian window
(sigma 1.5, valid filtering), K1 = 0.01, K2 = 0.03, peak 1.0, five scales with
weights ``MS_SSIM_WEIGHTS`` and 2x2 average pooling between scales (an odd
trailing row/column is dropped). Negative contrast-structure terms are clamped
to zero. Colour images are scored per channel and averaged. When the image is
too small for five scales, the feasible leading scales are used with their
weights renormalized to sum to one.

Distortion for the MSE objective is plain MSE on [0, 1] pixels; any rescaling
(e.g. by 255^2) belongs in lambda.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DomainError, GeometryError

MS_SSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)
WINDOW_SIZE = 11
WINDOW_SIGMA = 1.5
K1, K2 = 0.01, 0.03

MSE_LAMBDAS = (0.0016, 0.0032, 0.0075, 0.015, 0.03, 0.045)
MS_SSIM_LAMBDAS = (3.0, 12.0, 40.0, 120.0)


def _pair(x, y):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise GeometryError(f"image shapes differ: {x.shape} vs {y.shape}")
    return x, y


def mse(x, y) -> float:
    x, y = _pair(x, y)
    return float(np.mean((x - y) ** 2))


def psnr(x, y) -> float:
    """PSNR in dB for peak 1.0; identical images give ``math.inf``."""
    m = mse(x, y)
    return math.inf if m == 0 else 10.0 * math.log10(1.0 / m)


def gaussian_window(size: int = WINDOW_SIZE, sigma: float = WINDOW_SIGMA) -> np.ndarray:
    r = np.arange(size) - (size - 1) / 2
    g = np.exp(-(r**2) / (2 * sigma**2))
    return g / g.sum()


def _filter_valid(img, g):
    # separable valid-mode filtering: rows then columns
    k = g.size
    rows = sliding_window_view(img, k, axis=1) @ g
    return sliding_window_view(rows, k, axis=0) @ g


def _ssim_terms(x, y, g):
    c1, c2 = K1**2, K2**2
    mu_x, mu_y = _filter_valid(x, g), _filter_valid(y, g)
    sxx = _filter_valid(x * x, g) - mu_x**2
    syy = _filter_valid(y * y, g) - mu_y**2
    sxy = _filter_valid(x * y, g) - mu_x * mu_y
    cs_map = (2 * sxy + c2) / (sxx + syy + c2)
    lum = (2 * mu_x * mu_y + c1) / (mu_x**2 + mu_y**2 + c1)
    return float(np.mean(lum * cs_map)), float(np.mean(cs_map))


def _avg_pool2(img):
    h, w = img.shape[0] // 2 * 2, img.shape[1] // 2 * 2
    v = img[:h, :w]
    return 0.25 * (v[0::2, 0::2] + v[1::2, 0::2] + v[0::2, 1::2] + v[1::2, 1::2])


def num_scales(h: int, w: int) -> int:
    n = 0
    while n < len(MS_SSIM_WEIGHTS) and min(h, w) // (2**n) >= WINDOW_SIZE:
        n += 1
    return n


def ms_ssim(x, y) -> float:
    """MS-SSIM of [C, H, W] or [H, W] images in [0, 1]."""
    x, y = _pair(x, y)
    if x.ndim == 2:
        x, y = x[None], y[None]
    if x.ndim != 3:
        raise GeometryError(f"expected [C, H, W] or [H, W], got {x.shape}")
    scales = num_scales(x.shape[1], x.shape[2])
    if scales == 0:
        raise GeometryError(f"image {x.shape[1]}x{x.shape[2]} smaller than the {WINDOW_SIZE}x{WINDOW_SIZE} window")
    weights = np.asarray(MS_SSIM_WEIGHTS[:scales])
    weights = weights / weights.sum()
    g = gaussian_window()
    per_channel = []
    for xc, yc in zip(x, y):
        value = 1.0
        for j in range(scales):
            s, cs = _ssim_terms(xc, yc, g)
            term = s if j == scales - 1 else cs
            value *= max(term, 0.0) ** weights[j]
            xc, yc = _avg_pool2(xc), _avg_pool2(yc)
        per_channel.append(value)
    return float(min(max(np.mean(per_channel), 0.0), 1.0))


def ms_ssim_db(m: float) -> float:
    return math.inf if m >= 1.0 else -10.0 * math.log10(1.0 - m)


def rd_loss(rate_y, rate_z, distortion, lmbda, num_pixels: int | None = None) -> float:
    """R(y) + R(z) + lambda * D; rates are bpp, or bits when ``num_pixels`` is given."""
    if rate_y < 0 or rate_z < 0:
        raise DomainError("rates must be non-negative")
    if lmbda <= 0:
        raise DomainError("lambda must be positive")
    rate = rate_y + rate_z
    if num_pixels is not None:
        rate = rate / num_pixels
    return float(rate + lmbda * distortion)


def validate_lambda(lmbda: float, metric: str = "mse") -> float:
    """Accept any positive lambda for ``metric`` ('mse' or 'ms-ssim')."""
    if metric not in ("mse", "ms-ssim"):
        raise ValueError(f"unknown metric {metric!r}")
    if not (lmbda > 0 and math.isfinite(lmbda)):
        raise DomainError(f"lambda must be a positive finite number, got {lmbda}")
    return float(lmbda)


def default_lambda(metric: str) -> float:
    return 0.015 if metric == "mse" else 12.0


@dataclass(frozen=True)
class RdReport:
    rate_bpp: float
    psnr_db: float
    ms_ssim: float
    ms_ssim_db: float
    loss: float
    lmbda: float
    metric: str = "mse"

    FIELDS = ("rate_bpp", "psnr_db", "ms_ssim", "ms_ssim_db", "loss", "lmbda", "metric")

    def to_kv(self) -> str:
        return "\n".join(f"{k}={_fmt(v)}" for k, v in asdict(self).items()) + "\n"

    def csv_row(self, name: str | None = None) -> list:
        row = [_fmt(getattr(self, k)) for k in self.FIELDS]
        return row if name is None else [name] + row


def _fmt(v):
    if isinstance(v, float):
        return "inf" if math.isinf(v) else f"{v:.6f}"
    return str(v)


def rd_report(x, x_hat, rate_bpp: float, lmbda: float, metric: str = "mse") -> RdReport:
    validate_lambda(lmbda, metric)
    p = psnr(x, x_hat)
    try:
        m = ms_ssim(x, x_hat)
    except GeometryError:
        m = float("nan")
    d = mse(x, x_hat) if metric == "mse" else 1.0 - m
    m_db = ms_ssim_db(m) if m == m else float("nan")
    return RdReport(rate_bpp, p, m, m_db, rd_loss(rate_bpp, 0.0, d, lmbda), lmbda, metric)


def csv_table(rows) -> str:
    """CSV text with header ``name,`` + RdReport fields for (name, report) pairs."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(("name",) + RdReport.FIELDS)
    for name, report in rows:
        writer.writerow(report.csv_row(name))
    return buf.getvalue()
