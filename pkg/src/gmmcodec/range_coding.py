"""Byte-oriented range coder over 16-bit cumulative frequency tables.

Coder arithmetic (bit-exact, documented in README "Range coder"):

* state: ``low`` (33 bits, bit 32 is a pending carry), ``range`` (32 bits),
  a one-byte ``cache`` plus a count of pending 0xFF bytes.
* symbol with cumulative counts ``[c_lo, c_hi)`` of 2^16:
  ``low += (range * c_lo) >> 16``, ``range = ((range * c_hi) >> 16) - ((range * c_lo) >> 16)``.
* while ``range < 2^24``: shift one byte out of ``low`` and ``range <<= 8``.
* flush: five byte shifts. The first output byte is always 0.

The product form keeps every symbol's width >= 256 (range >= 2^24, count >= 1)
and loses well under 1e-5 bits per symbol to integer truncation.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from . import _kernels
from .entropy_models import QuantizedCdfTable
from .errors import CodingInfeasibleError, CorruptStreamError, GeometryError, StreamExhaustedError

FLUSH_BYTES = 5


def _stack_tables(cdfs) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(cdfs, np.ndarray) and cdfs.ndim == 2:
        tables = np.ascontiguousarray(cdfs, dtype=np.int32)
        return tables, np.full(tables.shape[0], tables.shape[1], dtype=np.int32)
    rows = [np.asarray(getattr(c, "cdf", c)) for c in cdfs]
    lengths = np.array([r.size for r in rows], dtype=np.int32)
    width = int(lengths.max()) if rows else 2
    tables = np.zeros((len(rows), width), dtype=np.int32)
    for i, r in enumerate(rows):
        tables[i, : r.size] = r
    return tables, lengths


class RangeEncoder:
    """Incremental encoder; feed symbol batches, then call :meth:`finish`."""

    def __init__(self, capacity: int = 1 << 12):
        self._state = np.array([0, 0xFFFFFFFF, 0, 1], dtype=np.uint64)
        self._buf = np.zeros(capacity, dtype=np.uint8)
        self._pos = 0
        self._finished = False

    def _reserve(self, n_symbols: int):
        # bytes written never exceed byte shifts; a symbol causes at most 2 shifts
        need = self._pos + 4 * n_symbols + 16 + 8
        if need > self._buf.size:
            grown = np.zeros(max(need, 2 * self._buf.size), dtype=np.uint8)
            grown[: self._pos] = self._buf[: self._pos]
            self._buf = grown

    def encode(self, symbols, tables, indexes=None, offset: int = 0):
        """Encode ``symbols`` (values, slot = value - offset) with ``tables[indexes[i]]``.

        ``tables`` is a 2-D int array of cumulative counts (or a sequence of
        :class:`QuantizedCdfTable`); ``indexes`` defaults to one table per symbol.
        """
        if self._finished:
            raise RuntimeError("encoder already finished")
        symbols = np.ascontiguousarray(symbols, dtype=np.int64).ravel()
        tab, lengths = _stack_tables(tables)
        if indexes is None:
            if tab.shape[0] != symbols.size:
                raise GeometryError(f"{symbols.size} symbols but {tab.shape[0]} tables")
            indexes = np.arange(symbols.size, dtype=np.int64)
        else:
            indexes = np.ascontiguousarray(indexes, dtype=np.int64).ravel()
            if indexes.size != symbols.size:
                raise GeometryError("indexes and symbols differ in length")
            if indexes.size and (indexes.min() < 0 or indexes.max() >= tab.shape[0]):
                raise GeometryError("table index out of range")
        self._reserve(symbols.size)
        pos = _kernels.encode_indexed(
            symbols, indexes, tab, lengths, np.int64(offset), self._state, self._buf, np.int64(self._pos)
        )
        if pos < 0:
            i = -pos - 1
            raise CodingInfeasibleError(f"symbol {int(symbols[i])} at position {i} has zero width in its table")
        self._pos = int(pos)

    def finish(self) -> bytes:
        if not self._finished:
            self._reserve(0)
            self._pos = int(_kernels.encode_flush(self._state, self._buf, np.int64(self._pos)))
            self._finished = True
        return self._buf[: self._pos].tobytes()


class RangeDecoder:
    """Incremental decoder mirroring :class:`RangeEncoder`."""

    def __init__(self, payload: bytes):
        self._payload = np.frombuffer(bytes(payload), dtype=np.uint8)
        self._state = np.zeros(3, dtype=np.uint64)
        if not _kernels.decode_init(self._state, self._payload):
            raise StreamExhaustedError("payload shorter than the coder header")

    @property
    def bytes_consumed(self) -> int:
        return int(self._state[2])

    def decode(self, tables, indexes=None, offset: int = 0, count: int | None = None) -> np.ndarray:
        tab, lengths = _stack_tables(tables)
        if indexes is None:
            indexes = np.arange(tab.shape[0] if count is None else count, dtype=np.int64)
        else:
            indexes = np.ascontiguousarray(indexes, dtype=np.int64).ravel()
        if indexes.size and (indexes.min() < 0 or indexes.max() >= tab.shape[0]):
            raise GeometryError("table index out of range")
        out = np.empty(indexes.size, dtype=np.int64)
        n = _kernels.decode_indexed(self._payload, indexes, tab, lengths, np.int64(offset), self._state, out)
        if n == -2:
            raise StreamExhaustedError("range decoder ran out of payload bytes")
        if n == -3:
            raise CorruptStreamError("range decoder state left the coding interval")
        return out


def rc_encode(symbols: Sequence[int], cdfs) -> bytes:
    """Encode ``symbols[i]`` (table slots) with table ``cdfs[i]``; returns the payload."""
    symbols = np.asarray(symbols, dtype=np.int64).ravel()
    enc = RangeEncoder(capacity=max(64, symbols.size))
    if symbols.size:
        enc.encode(symbols, cdfs)
    elif len(cdfs):
        raise GeometryError("tables given for an empty symbol sequence")
    return enc.finish()


def rc_decode(payload: bytes, cdfs) -> np.ndarray:
    """Decode one symbol per table in ``cdfs``."""
    dec = RangeDecoder(payload)
    if len(cdfs) == 0:
        return np.empty(0, dtype=np.int64)
    return dec.decode(cdfs)


def rc_encode_indexed(symbols, indexes, tables, offset: int = 0) -> bytes:
    """Shared-table form: symbol i uses ``tables[indexes[i]]``; slot = value - offset."""
    symbols = np.asarray(symbols, dtype=np.int64).ravel()
    enc = RangeEncoder(capacity=max(64, symbols.size))
    enc.encode(symbols, tables, indexes, offset)
    return enc.finish()


def rc_decode_indexed(payload: bytes, indexes, tables, offset: int = 0) -> np.ndarray:
    return RangeDecoder(payload).decode(tables, indexes, offset)


def quantized_cross_entropy_bits(symbols, cdfs) -> float:
    """Sum of -log2 q_i where q_i is each symbol's quantized probability."""
    tab, _ = _stack_tables(cdfs)
    s = np.asarray(symbols, dtype=np.int64).ravel()
    rows = np.arange(s.size)
    widths = tab[rows, s + 1].astype(np.int64) - tab[rows, s]
    return float(np.sum(16.0 - np.log2(widths)))


__all__ = [
    "FLUSH_BYTES",
    "QuantizedCdfTable",
    "RangeDecoder",
    "RangeEncoder",
    "quantized_cross_entropy_bits",
    "rc_decode",
    "rc_decode_indexed",
    "rc_encode",
    "rc_encode_indexed",
]
