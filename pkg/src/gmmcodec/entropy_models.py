"""Discretized Gaussian-mixture likelihoods, the factorized prior and CDF tables.

Every coded symbol lives in the alphabet [-255, 256]. The first symbol absorbs
all mass below -254.5 and the last all mass above 255.5, so a discretized
distribution over the alphabet always sums to one.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from . import _kernels
from .errors import (
    DegenerateDistributionError,
    DomainError,
    EmptyInputError,
    GeometryError,
)
from .quantization import ALPHABET_MAX, ALPHABET_MIN, ALPHABET_SIZE, check_alphabet

SIGMA_MIN = 0.11
LIKELIHOOD_FLOOR = 2.0**-20
CDF_PRECISION = _kernels.PRECISION
CDF_TOTAL = _kernels.TOTAL

# pseudo-count given to every bin outside a channel's expanded support
PRIOR_FLOOR_COUNT = 2.0**-16  # small enough to quantize to the minimum count of 1

_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


def std_normal_cdf(x):
    return ndtr(x)


def std_normal_pdf(x):
    x = np.asarray(x, dtype=np.float64)
    return _INV_SQRT_2PI * np.exp(-0.5 * x * x)


@dataclass(frozen=True)
class MixtureParams:
    """Per-element K-component Gaussian mixture, tensors shaped [K, ...].

    Build with :meth:`create`, which clamps scales to ``SIGMA_MIN`` and records
    where clamping happened in ``clamped``.
    """

    weights: np.ndarray
    means: np.ndarray
    scales: np.ndarray
    clamped: np.ndarray = field(repr=False)

    @classmethod
    def create(cls, weights, means, scales, *, check=True) -> "MixtureParams":
        w = np.asarray(weights, dtype=np.float64)
        m = np.asarray(means, dtype=np.float64)
        s = np.asarray(scales, dtype=np.float64)
        if not (w.shape == m.shape == s.shape):
            raise GeometryError(f"mixture tensors differ in shape: {w.shape}, {m.shape}, {s.shape}")
        if w.ndim < 1 or w.shape[0] < 1:
            raise GeometryError("mixture tensors need a leading K >= 1 axis")
        if check:
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(m)) and np.all(np.isfinite(s))):
                raise DomainError("mixture parameters must be finite")
            if np.any(w < 0):
                raise DomainError("mixture weights must be non-negative")
            if np.any(np.abs(w.sum(axis=0) - 1.0) > 1e-6):
                raise DomainError("mixture weights must sum to 1 per element")
        clamped = s < SIGMA_MIN
        s = np.maximum(s, SIGMA_MIN)
        for a in (w, m, s, clamped):
            a.setflags(write=False)
        return cls(w, m, s, clamped)

    @classmethod
    def from_raw(cls, logits, means, raw_scales) -> "MixtureParams":
        """Softmax the weight logits over K and map scales through exp."""
        logits = np.asarray(logits, dtype=np.float64)
        z = logits - logits.max(axis=0, keepdims=True)
        e = np.exp(z)
        w = e / e.sum(axis=0, keepdims=True)
        return cls.create(w, means, np.exp(np.asarray(raw_scales, dtype=np.float64)), check=False)

    @property
    def K(self) -> int:
        return self.weights.shape[0]

    @property
    def element_shape(self) -> tuple[int, ...]:
        return self.weights.shape[1:]

    def flat(self) -> "MixtureParams":
        """View with elements flattened to [K, n]."""
        k = self.K
        return MixtureParams(
            self.weights.reshape(k, -1),
            self.means.reshape(k, -1),
            self.scales.reshape(k, -1),
            self.clamped.reshape(k, -1),
        )


def _component_terms(symbols, params: MixtureParams):
    """Per-component standardized bin edges and edge masks."""
    y = check_alphabet(symbols).astype(np.float64)
    if y.shape != params.element_shape:
        raise GeometryError(f"symbols shape {y.shape} != params element shape {params.element_shape}")
    upper = (y + 0.5 - params.means) / params.scales
    lower = (y - 0.5 - params.means) / params.scales
    at_min = np.broadcast_to(y == ALPHABET_MIN, upper.shape)
    at_max = np.broadcast_to(y == ALPHABET_MAX, upper.shape)
    return y, upper, lower, at_min, at_max


def _bin_mass(upper, lower, at_min, at_max):
    """Phi(upper) - Phi(lower) with the alphabet-edge substitutions.

    Bins right of zero use survival functions to avoid cancellation near 1.
    """
    right = lower > 0
    cu = np.where(right, -ndtr(-upper), ndtr(upper))
    cl = np.where(right, -ndtr(-lower), ndtr(lower))
    cu = np.where(at_max, np.where(right, 0.0, 1.0), cu)
    cl = np.where(at_min, np.where(right, -1.0, 0.0), cl)
    return np.maximum(cu - cl, 0.0)


def discretized_mixture_likelihood(symbols, params: MixtureParams) -> np.ndarray:
    """Probability of each integer symbol under its discretized mixture."""
    _, upper, lower, at_min, at_max = _component_terms(symbols, params)
    mass = _bin_mass(upper, lower, at_min, at_max)
    return np.sum(params.weights * mass, axis=0)


def mixture_cdf(t, params: MixtureParams) -> np.ndarray:
    """Continuous mixture CDF evaluated elementwise at ``t`` (no edge rule)."""
    t = np.asarray(t, dtype=np.float64)
    return np.sum(params.weights * ndtr((t - params.means) / params.scales), axis=0)


@dataclass(frozen=True)
class MixtureGrad:
    """Gradients of sum(log p) w.r.t. each raw mixture tensor.

    ``clamped`` marks scale entries sitting below ``SIGMA_MIN``; their
    gradient is the subgradient 0 of the clamp.
    """

    weights: np.ndarray
    means: np.ndarray
    scales: np.ndarray
    clamped: np.ndarray
    log_likelihood: float


def mixture_likelihood_grad(symbols, params: MixtureParams) -> MixtureGrad:
    _, upper, lower, at_min, at_max = _component_terms(symbols, params)
    p = np.sum(params.weights * _bin_mass(upper, lower, at_min, at_max), axis=0)
    if np.any(p <= 0):
        raise DomainError("zero likelihood; log-likelihood gradient undefined")
    mass = _bin_mass(upper, lower, at_min, at_max)
    pdf_u = np.where(at_max, 0.0, std_normal_pdf(upper))
    pdf_l = np.where(at_min, 0.0, std_normal_pdf(lower))
    # infinities never reach here, but 0 * large stays finite for edge bins
    u_term = pdf_u * np.where(at_max, 0.0, upper)
    l_term = pdf_l * np.where(at_min, 0.0, lower)
    w, s = params.weights, params.scales
    g_w = mass / p
    g_mu = w * (pdf_l - pdf_u) / s / p
    g_sigma = w * (l_term - u_term) / s / p
    g_sigma = np.where(params.clamped, 0.0, g_sigma)
    return MixtureGrad(g_w, g_mu, g_sigma, params.clamped.copy(), float(np.sum(np.log(p))))


def mixture_pmf_table(params: MixtureParams) -> np.ndarray:
    """PMF over the full alphabet for every element: shape [n_elements, 512]."""
    flat = params.flat()
    edges = np.arange(ALPHABET_MIN, ALPHABET_MAX) + 0.5  # 511 interior edges
    # [n, 511] mixture CDF at interior edges, accumulated component by component
    cdf = np.zeros((flat.weights.shape[1], edges.size))
    for k in range(flat.K):
        z = (edges[None, :] - flat.means[k][:, None]) / flat.scales[k][:, None]
        cdf += flat.weights[k][:, None] * ndtr(z)
    n = cdf.shape[0]
    full = np.empty((n, edges.size + 2))
    full[:, 0] = 0.0
    full[:, -1] = 1.0
    full[:, 1:-1] = cdf
    return np.maximum(np.diff(full, axis=1), 0.0)


@dataclass(frozen=True)
class RateEstimate:
    total_bits: float
    bits_map: np.ndarray
    bpp: float | None


def estimate_rate_bits(symbols, probabilities, num_pixels: int | None = None) -> RateEstimate:
    """Sum of -log2 p over elements, with the per-element map and optional bpp.

    Probabilities are floored at ``LIKELIHOOD_FLOOR`` after validation.
    """
    p = np.asarray(probabilities, dtype=np.float64)
    if symbols is not None and np.shape(getattr(symbols, "values", symbols)) != p.shape:
        raise GeometryError("symbols and probabilities differ in shape")
    if np.any(~(p > 0)) or np.any(p > 1.0 + 1e-12):
        raise DomainError("probabilities must lie in (0, 1]")
    bits = -np.log2(np.maximum(np.minimum(p, 1.0), LIKELIHOOD_FLOOR))
    total = float(bits.sum())
    bpp = None
    if num_pixels is not None:
        if num_pixels <= 0:
            raise DomainError("pixel count must be positive")
        bpp = total / num_pixels
    return RateEstimate(total, bits, bpp)


@dataclass(frozen=True)
class QuantizedCdfTable:
    """Cumulative counts over the alphabet with total 2^16; cdf[0]=0, cdf[-1]=65536."""

    cdf: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.cdf, dtype=np.int64)
        if c.ndim != 1 or c.size < 2:
            raise GeometryError("CDF table must be 1-D with at least two entries")
        if c[0] != 0 or c[-1] != CDF_TOTAL or np.any(np.diff(c) < 1):
            raise DomainError("CDF table must run strictly increasing from 0 to 65536")
        c.setflags(write=False)
        object.__setattr__(self, "cdf", c)

    @property
    def counts(self) -> np.ndarray:
        return np.diff(self.cdf)

    @property
    def probabilities(self) -> np.ndarray:
        return self.counts / CDF_TOTAL

    def __len__(self):
        return self.cdf.size - 1


def quantize_pmfs(pmfs) -> np.ndarray:
    """Batch form of :func:`build_quantized_cdf`: [n, A] pmfs -> [n, A+1] int32 CDFs.

    Rows are renormalized before quantization; no validation.
    """
    pmfs = np.ascontiguousarray(pmfs, dtype=np.float64)
    if pmfs.ndim == 1:
        pmfs = pmfs[None, :]
    out = np.empty((pmfs.shape[0], pmfs.shape[1] + 1), dtype=np.int32)
    _kernels.quantize_pmf_rows(pmfs, out)
    return out


def build_quantized_cdf(pmf) -> QuantizedCdfTable:
    p = np.asarray(pmf, dtype=np.float64)
    if p.ndim != 1 or p.size == 0:
        raise GeometryError("pmf must be a non-empty 1-D sequence")
    if p.size > CDF_TOTAL:
        raise DomainError("alphabet larger than CDF precision")
    if not np.all(np.isfinite(p)) or np.any(p < 0):
        raise DomainError("pmf entries must be finite and non-negative")
    if not np.any(p > 0):
        raise DegenerateDistributionError("pmf has no mass")
    if abs(p.sum() - 1.0) > 1e-6:
        raise DomainError(f"pmf sums to {p.sum()!r}, expected 1")
    return QuantizedCdfTable(quantize_pmfs(p)[0])


@dataclass(frozen=True)
class FactorizedPrior:
    """Per-channel PMF over the alphabet, shape [C, 512]."""

    pmf: np.ndarray

    @property
    def channels(self) -> int:
        return self.pmf.shape[0]

    alphabet = (ALPHABET_MIN, ALPHABET_MAX)

    def cdf_tables(self) -> np.ndarray:
        return quantize_pmfs(self.pmf)


def fit_factorized_prior(samples) -> FactorizedPrior:
    """Fit a smoothed histogram per channel of a [C, H, W] (or [C, n]) tensor.

    Each bin in [min - 1, max + 1] of a channel's samples gets one extra count;
    bins outside that window get ``PRIOR_FLOOR_COUNT`` so nothing is impossible.
    """
    s = check_alphabet(samples)
    if s.ndim < 1 or s.size == 0:
        raise EmptyInputError("no samples to fit")
    s = s.reshape(s.shape[0], -1)
    if s.shape[1] == 0:
        raise EmptyInputError("every channel needs at least one sample")
    pmf = np.full((s.shape[0], ALPHABET_SIZE), PRIOR_FLOOR_COUNT)
    for c, row in enumerate(s):
        hist = np.bincount(row - ALPHABET_MIN, minlength=ALPHABET_SIZE).astype(np.float64)
        lo = max(int(row.min()) - 1 - ALPHABET_MIN, 0)
        hi = min(int(row.max()) + 1 - ALPHABET_MIN, ALPHABET_SIZE - 1)
        pmf[c, lo : hi + 1] = hist[lo : hi + 1] + 1.0
    pmf /= pmf.sum(axis=1, keepdims=True)
    pmf.setflags(write=False)
    return FactorizedPrior(pmf)


def prior_from_counts(counts) -> FactorizedPrior:
    """Prior whose PMF is a channel-wise count table (e.g. a decoded CDF table)."""
    c = np.asarray(counts, dtype=np.float64)
    if c.ndim != 2 or c.shape[1] != ALPHABET_SIZE:
        raise GeometryError("count table must be [C, 512]")
    if np.any(c <= 0):
        raise DomainError("every count must be positive")
    pmf = c / c.sum(axis=1, keepdims=True)
    pmf.setflags(write=False)
    return FactorizedPrior(pmf)


def factorized_likelihood(symbols, prior: FactorizedPrior) -> np.ndarray:
    s = check_alphabet(symbols)
    if s.ndim < 1 or s.shape[0] != prior.channels:
        raise GeometryError(f"symbols have {s.shape[0] if s.ndim else 0} channels, prior has {prior.channels}")
    flat = s.reshape(s.shape[0], -1) - ALPHABET_MIN
    p = np.take_along_axis(prior.pmf, flat, axis=1)
    return p.reshape(s.shape)
