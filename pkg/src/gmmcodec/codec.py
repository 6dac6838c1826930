"""Image <-> container pipeline.

Encoding: pad to a multiple of 64, analysis, round, hyper analysis, round the
side latent, fit and transport its factorized prior, code the side latent,
hyper synthesis, then code the main latent with per-element mixture CDFs.

Main-latent symbols are coded position by position in raster order, all N
channels of a position together (channel ascending); the side latent uses the
same order. In joint mode the encoder runs exactly the serial loop the decoder
runs, writing decoded-equivalent values into a zero-initialised buffer, so both
sides compute identical parameters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .container import PAD_MULTIPLE, CompressedContainer, pack_prior_counts
from .entropy_models import (
    MixtureParams,
    discretized_mixture_likelihood,
    fit_factorized_prior,
    mixture_pmf_table,
    quantize_pmfs,
)
from .errors import AlphabetRangeError, GeometryError, WeightMismatchError
from .quantization import ALPHABET_MAX, ALPHABET_MIN, quantize_round, round_half_away
from .range_coding import RangeDecoder, RangeEncoder
from .transforms import networks as nets
from .transforms.weights import NetworkWeights

CODING_MODES = ("hyperprior", "joint")
# positions per coder batch in hyperprior mode (bounds table memory)
_CHUNK_ELEMENTS = 1 << 14


def pad_reflect(x, multiple: int = PAD_MULTIPLE):
    """Pad bottom/right to the next multiple with mirror reflection.

    The edge sample is not repeated. Where the pad exceeds ``dim - 1`` the
    excess is filled by replicating the last sample. Returns (padded, (H, W)).
    """
    x = np.asarray(x)
    if x.ndim != 3 or x.shape[1] < 1 or x.shape[2] < 1:
        raise GeometryError(f"expected [C, H, W] with H, W >= 1, got {x.shape}")
    _, h, w = x.shape
    ph = math.ceil(h / multiple) * multiple - h
    pw = math.ceil(w / multiple) * multiple - w
    rh, rw = min(ph, h - 1), min(pw, w - 1)
    out = np.pad(x, ((0, 0), (0, rh), (0, rw)), mode="reflect")
    if ph > rh or pw > rw:
        out = np.pad(out, ((0, 0), (0, ph - rh), (0, pw - rw)), mode="edge")
    return out, (h, w)


def crop(x, shape):
    h, w = shape
    return x[:, :h, :w]


def _raster(t):
    """[C, h, w] -> [h*w, C] in coding order."""
    return np.ascontiguousarray(np.moveaxis(t, 0, -1).reshape(-1, t.shape[0]))


def _unraster(rows, c, h, w):
    return np.ascontiguousarray(rows.reshape(h, w, c).transpose(2, 0, 1))


def _by_position(params: MixtureParams, n: int) -> tuple:
    k = params.K
    return tuple(a.reshape(k, n, -1) for a in (params.weights, params.means, params.scales, params.clamped))


def _cdf_rows(params: MixtureParams) -> np.ndarray:
    """Quantized CDF per element of [K, N, P] params, ordered [P, N, 513] -> [P*N, 513]."""
    k, n, p = params.weights.shape
    ordered = MixtureParams(
        *(np.ascontiguousarray(np.swapaxes(a, 1, 2)) for a in (params.weights, params.means, params.scales, params.clamped))
    )
    return quantize_pmfs(mixture_pmf_table(ordered))


@dataclass
class CodecTrace:
    """Symbols and coding tables seen by one side of the codec."""

    y_hat: np.ndarray
    z_hat: np.ndarray
    y_tables: np.ndarray | None = None  # [h*w*N, 513] in coding order
    z_tables: np.ndarray | None = None  # [N, 513]
    y_bits: np.ndarray | None = None  # -log2 q per element, [N, h, w]
    z_bits: np.ndarray | None = None
    y_likelihood: np.ndarray | None = None  # continuous-model p per element
    stats: dict = field(default_factory=dict)


def _side_latent(z) -> np.ndarray:
    r = round_half_away(z)
    if r.size and (r.min() < ALPHABET_MIN or r.max() > ALPHABET_MAX):
        raise AlphabetRangeError(f"side latent spans [{r.min():.0f}, {r.max():.0f}], outside the alphabet")
    return r.astype(np.int64)


def _code_bits(tables, symbols):
    rows = np.arange(symbols.size)
    s = symbols.ravel() - ALPHABET_MIN
    widths = tables[rows, s + 1].astype(np.int64) - tables[rows, s]
    return 16.0 - np.log2(widths)


def encode_image_traced(x, w: NetworkWeights, mode: str = "hyperprior", keep_tables: bool = False):
    if mode not in CODING_MODES:
        raise ValueError(f"mode must be one of {CODING_MODES}, got {mode!r}")
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3 or x.shape[0] != 3:
        raise GeometryError(f"image must be [3, H, W], got {x.shape}")
    xp, (h0, w0) = pad_reflect(x)
    y = nets.analysis_forward(xp, w)
    y_hat = quantize_round(y)
    z = nets.hyper_analysis_forward(y, w)
    z_hat = _side_latent(z)

    prior = fit_factorized_prior(z_hat)
    z_tables = prior.cdf_tables()
    z_counts = np.diff(z_tables, axis=1)
    z_rows = _raster(z_hat)
    enc = RangeEncoder()
    enc.encode(z_rows.ravel(), z_tables, np.tile(np.arange(w.N), z_rows.shape[0]), offset=ALPHABET_MIN)
    z_payload = enc.finish()

    hyper = nets.hyper_synthesis_forward(z_hat, w)
    _, hh, ww = y_hat.shape
    enc = RangeEncoder(capacity=4 * y_hat.size + 64)
    y_rows = _raster(y_hat)
    bits_rows = np.empty(y_rows.shape)
    p_rows = np.empty(y_rows.shape)
    tables_all = [] if keep_tables else None

    if mode == "hyperprior":
        params = nets.fusion_forward(hyper, np.zeros_like(hyper), w)
        flat = _by_position(params, w.N)  # 4 x [K, N, P]
        p_all = discretized_mixture_likelihood(y_hat, params)
        p_rows[:] = _raster(p_all)
        step = max(1, _CHUNK_ELEMENTS // w.N)
        for start in range(0, hh * ww, step):
            sl = slice(start, min(start + step, hh * ww))
            chunk = MixtureParams(*(a[:, :, sl] for a in flat))
            tables = _cdf_rows(chunk)
            sym = y_rows[sl].ravel()
            enc.encode(sym, tables, offset=ALPHABET_MIN)
            bits_rows[sl] = _code_bits(tables, sym).reshape(-1, w.N)
            if keep_tables:
                tables_all.append(tables)
    else:
        y_buf = np.zeros(y_hat.shape)
        for pos in range(hh * ww):
            i, j = divmod(pos, ww)
            ctx = nets.context_forward(y_buf, (i, j), w)
            params = nets.fusion_forward(hyper[:, i, j], ctx, w)  # [K, N]
            tables = quantize_pmfs(mixture_pmf_table(params))
            sym = y_rows[pos]
            enc.encode(sym, tables, offset=ALPHABET_MIN)
            bits_rows[pos] = _code_bits(tables, sym)
            p_rows[pos] = discretized_mixture_likelihood(sym, params)
            y_buf[:, i, j] = sym
            if keep_tables:
                tables_all.append(tables)
    y_payload = enc.finish()
    z_bits = _code_bits(z_tables[np.tile(np.arange(w.N), z_rows.shape[0])], z_rows.ravel())

    container = CompressedContainer(
        mode=mode,
        N=w.N,
        K=w.K,
        height=h0,
        width=w0,
        weights_checksum=w.checksum,
        z_prior=pack_prior_counts(z_counts),
        z_payload=z_payload,
        y_payload=y_payload,
    )
    trace = CodecTrace(
        y_hat=y_hat,
        z_hat=z_hat,
        y_tables=np.concatenate(tables_all) if keep_tables else None,
        z_tables=z_tables,
        y_bits=_unraster(bits_rows, w.N, hh, ww),
        z_bits=_unraster(z_bits.reshape(-1, w.N), w.N, *z_hat.shape[1:]),
        y_likelihood=_unraster(p_rows, w.N, hh, ww),
    )
    trace.stats = {"latent_shape": y_hat.shape, "side_shape": z_hat.shape, "padded_shape": xp.shape[1:]}
    return container, trace


def encode_image(x, w: NetworkWeights, mode: str = "hyperprior") -> CompressedContainer:
    return encode_image_traced(x, w, mode)[0]


@dataclass
class DecodeResult:
    image: np.ndarray
    trace: CodecTrace


def decode_image(c: CompressedContainer, w: NetworkWeights, keep_tables: bool = False) -> DecodeResult:
    if c.weights_checksum != w.checksum or c.N != w.N or c.K != w.K:
        raise WeightMismatchError(
            f"container was made with weights {c.weights_checksum:016x} (N={c.N}, K={c.K}); "
            f"given {w.checksum:016x} (N={w.N}, K={w.K})"
        )
    ph, pw = c.padded_shape
    zh, zw = ph // 64, pw // 64
    hh, ww = ph // 16, pw // 16

    z_counts = c.prior_counts()
    z_tables = np.zeros((w.N, z_counts.shape[1] + 1), dtype=np.int32)
    np.cumsum(z_counts, axis=1, out=z_tables[:, 1:])
    dec = RangeDecoder(c.z_payload)
    z_rows = dec.decode(z_tables, np.tile(np.arange(w.N), zh * zw), offset=ALPHABET_MIN)
    z_hat = _unraster(z_rows, w.N, zh, zw)

    hyper = nets.hyper_synthesis_forward(z_hat, w)
    dec = RangeDecoder(c.y_payload)
    y_rows = np.empty((hh * ww, w.N), dtype=np.int64)
    tables_all = [] if keep_tables else None

    if c.mode == "hyperprior":
        flat = _by_position(nets.fusion_forward(hyper, np.zeros_like(hyper), w), w.N)
        step = max(1, _CHUNK_ELEMENTS // w.N)
        for start in range(0, hh * ww, step):
            sl = slice(start, min(start + step, hh * ww))
            chunk = MixtureParams(*(a[:, :, sl] for a in flat))
            tables = _cdf_rows(chunk)
            y_rows[sl] = dec.decode(tables, offset=ALPHABET_MIN).reshape(-1, w.N)
            if keep_tables:
                tables_all.append(tables)
    else:
        y_buf = np.zeros((w.N, hh, ww))
        for pos in range(hh * ww):
            i, j = divmod(pos, ww)
            ctx = nets.context_forward(y_buf, (i, j), w)
            params = nets.fusion_forward(hyper[:, i, j], ctx, w)
            tables = quantize_pmfs(mixture_pmf_table(params))
            sym = dec.decode(tables, offset=ALPHABET_MIN)
            y_rows[pos] = sym
            y_buf[:, i, j] = sym
            if keep_tables:
                tables_all.append(tables)
    y_hat = _unraster(y_rows, w.N, hh, ww)
    image = crop(nets.synthesis_forward(y_hat, w), (c.height, c.width)).astype(np.float64)
    trace = CodecTrace(
        y_hat=y_hat,
        z_hat=z_hat,
        y_tables=np.concatenate(tables_all) if keep_tables else None,
        z_tables=z_tables,
    )
    trace.stats = {"height": c.height, "width": c.width, "bpp": c.bpp, "mode": c.mode}
    return DecodeResult(image, trace)


def element_bits(c: CompressedContainer, w: NetworkWeights) -> np.ndarray:
    """Per-element coded bits (-log2 q) of the main latent, [N, h, w]."""
    res = decode_image(c, w, keep_tables=True)
    rows = _raster(res.trace.y_hat).ravel()
    return _unraster(_code_bits(res.trace.y_tables, rows).reshape(-1, w.N), w.N, *res.trace.y_hat.shape[1:])
