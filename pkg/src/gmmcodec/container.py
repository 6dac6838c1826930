"""GMMC container: header, side-prior table, side and main range-coded payloads.

Byte layout, little-endian, version 1::

    offset  size  field
    0       4     magic b"GMMC"
    4       1     format version (1)
    5       1     mode: 0 factorized (reserved), 1 hyperprior, 2 joint
    6       2     N (latent channels; side latent has N channels too)
    8       1     K (mixture components)
    9       4     original image height
    13      4     original image width
    17      8     weights checksum (FNV-1a 64 of the GMXW file)
    25      4     side-prior table length P, then P bytes
    .       4     side payload length Z, then Z bytes
    .       4     main payload length Y, then Y bytes
    .       8     FNV-1a 64 over every preceding byte

Side-prior table: for each of the N channels, ``i16 lo | u16 n | n x u16 counts``
giving the quantized counts of symbols lo .. lo+n-1; every other symbol of the
512-symbol alphabet has count 1. Counts of a channel must total 65536.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from .checksum import fnv1a64
from .entropy_models import CDF_TOTAL
from .errors import CorruptStreamError
from .quantization import ALPHABET_MIN, ALPHABET_SIZE

MAGIC = b"GMMC"
VERSION = 1
MODES = {"factorized": 0, "hyperprior": 1, "joint": 2}
MODE_NAMES = {v: k for k, v in MODES.items()}
PAD_MULTIPLE = 64

_HEADER = struct.Struct("<4sBBHBIIQ")
HEADER_BYTES = _HEADER.size  # 25


def pack_prior_counts(counts) -> bytes:
    """Serialize a [C, 512] count table (all counts >= 1) sparsely."""
    counts = np.asarray(counts, dtype=np.int64)
    out = bytearray()
    for row in counts:
        big = np.flatnonzero(row > 1)
        if big.size:
            lo, hi = int(big[0]), int(big[-1])
        else:
            lo, hi = 0, -1
        n = hi - lo + 1
        out += struct.pack("<hH", lo + ALPHABET_MIN, n)
        out += row[lo : hi + 1].astype("<u2").tobytes()
    return bytes(out)


def unpack_prior_counts(data: bytes, channels: int) -> np.ndarray:
    counts = np.ones((channels, ALPHABET_SIZE), dtype=np.int64)
    off = 0
    try:
        for c in range(channels):
            lo, n = struct.unpack_from("<hH", data, off)
            off += 4
            start = lo - ALPHABET_MIN
            if start < 0 or start + n > ALPHABET_SIZE or off + 2 * n > len(data):
                raise CorruptStreamError(f"side-prior channel {c} out of bounds")
            counts[c, start : start + n] = np.frombuffer(data, dtype="<u2", count=n, offset=off)
            off += 2 * n
    except struct.error:
        raise CorruptStreamError("side-prior table truncated") from None
    if off != len(data):
        raise CorruptStreamError("trailing bytes in side-prior table")
    if np.any(counts < 1) or np.any(counts.sum(axis=1) != CDF_TOTAL):
        raise CorruptStreamError("side-prior counts do not form valid 16-bit tables")
    return counts


@dataclass(frozen=True)
class CompressedContainer:
    mode: str
    N: int
    K: int
    height: int
    width: int
    weights_checksum: int
    z_prior: bytes
    z_payload: bytes
    y_payload: bytes

    @property
    def padded_shape(self) -> tuple[int, int]:
        return (
            math.ceil(self.height / PAD_MULTIPLE) * PAD_MULTIPLE,
            math.ceil(self.width / PAD_MULTIPLE) * PAD_MULTIPLE,
        )

    @property
    def num_pixels(self) -> int:
        return self.height * self.width

    def to_bytes(self) -> bytes:
        head = _HEADER.pack(
            MAGIC, VERSION, MODES[self.mode], self.N, self.K, self.height, self.width, self.weights_checksum
        )
        body = b"".join(struct.pack("<I", len(p)) + p for p in (self.z_prior, self.z_payload, self.y_payload))
        blob = head + body
        return blob + struct.pack("<Q", fnv1a64(blob))

    def __len__(self) -> int:
        return HEADER_BYTES + 12 + len(self.z_prior) + len(self.z_payload) + len(self.y_payload) + 8

    @property
    def bpp(self) -> float:
        """Total container bits over the original pixel count."""
        return len(self) * 8 / self.num_pixels

    def section_bits(self) -> dict:
        return {
            "header": (HEADER_BYTES + 12 + 8) * 8,
            "z_prior": len(self.z_prior) * 8,
            "z_payload": len(self.z_payload) * 8,
            "y_payload": len(self.y_payload) * 8,
        }

    def prior_counts(self) -> np.ndarray:
        return unpack_prior_counts(self.z_prior, self.N)

    @classmethod
    def from_bytes(cls, data: bytes) -> "CompressedContainer":
        data = bytes(data)
        if len(data) < HEADER_BYTES + 12 + 8:
            raise CorruptStreamError("container truncated")
        magic, version, mode, N, K, height, width, wsum = _HEADER.unpack_from(data, 0)
        if magic != MAGIC:
            raise CorruptStreamError("bad magic: not a GMMC container")
        if version != VERSION:
            raise CorruptStreamError(f"unsupported container version {version}")
        if struct.unpack("<Q", data[-8:])[0] != fnv1a64(data[:-8]):
            raise CorruptStreamError("container checksum mismatch")
        if mode not in MODE_NAMES or mode == MODES["factorized"]:
            raise CorruptStreamError(f"unsupported mode {mode}")
        if N < 1 or K < 1 or height < 1 or width < 1:
            raise CorruptStreamError("invalid header fields")
        off = HEADER_BYTES
        sections = []
        for name in ("side prior", "side payload", "main payload"):
            if off + 4 > len(data) - 8:
                raise CorruptStreamError(f"{name} length missing")
            (n,) = struct.unpack_from("<I", data, off)
            off += 4
            if off + n > len(data) - 8:
                raise CorruptStreamError(f"{name} length {n} exceeds container")
            sections.append(data[off : off + n])
            off += n
        if off != len(data) - 8:
            raise CorruptStreamError("trailing bytes before checksum")
        return cls(MODE_NAMES[mode], N, K, height, width, wsum, *sections)
