"""Quantizer: rounding for inference, additive uniform noise for training.

Rounding is half-away-from-zero followed by clipping to the coding alphabet.
Noise draws come from numpy's ``Philox4x64`` counter-based generator keyed by a
64-bit seed, so streams are reproducible across platforms and implementations
that follow the Philox-4x64-10 definition.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import AlphabetRangeError, GeometryError, NumericError

ALPHABET_MIN = -255
ALPHABET_MAX = 256
ALPHABET_SIZE = ALPHABET_MAX - ALPHABET_MIN + 1  # 512


@dataclass(frozen=True)
class SymbolTensor:
    """Integer latent symbols with geometry [C, H, W]."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.ndim != 3:
            raise GeometryError(f"SymbolTensor must be [C, H, W], got shape {v.shape}")
        v = check_alphabet(v)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.values.shape

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)


@dataclass(frozen=True)
class RelaxedTensor:
    """Latent with additive U[-0.5, 0.5) noise; ``seed`` identifies the draw."""

    values: np.ndarray
    seed: int


def check_alphabet(symbols) -> np.ndarray:
    """Return ``symbols`` as an int64 array, raising if any lies outside the alphabet."""
    s = np.asarray(getattr(symbols, "values", symbols))
    if s.dtype.kind == "f":
        if not np.all(np.isfinite(s)) or np.any(s != np.round(s)):
            raise AlphabetRangeError("symbols must be integer-valued")
    elif s.dtype.kind not in "iu":
        raise AlphabetRangeError(f"unsupported symbol dtype {s.dtype}")
    s = s.astype(np.int64)
    if s.size and (s.min() < ALPHABET_MIN or s.max() > ALPHABET_MAX):
        raise AlphabetRangeError(
            f"symbols span [{s.min()}, {s.max()}], alphabet is [{ALPHABET_MIN}, {ALPHABET_MAX}]"
        )
    return s


def round_half_away(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    whole = np.trunc(x)
    frac = x - whole  # exact for IEEE doubles
    return whole + np.where(np.abs(frac) >= 0.5, np.sign(frac), 0.0)


def quantize_round(latent) -> np.ndarray:
    """Round half away from zero and clip to [-255, 256]; returns int64 array."""
    x = np.asarray(latent, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise NumericError("non-finite value in latent")
    return np.clip(round_half_away(x), ALPHABET_MIN, ALPHABET_MAX).astype(np.int64)


def noise_generator(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(int(seed) & 0xFFFFFFFFFFFFFFFF))


def relax_uniform_noise(latent, seed: int) -> RelaxedTensor:
    x = np.asarray(latent, dtype=np.float64)
    u = noise_generator(seed).random(x.shape) - 0.5
    return RelaxedTensor(values=x + u, seed=int(seed))
