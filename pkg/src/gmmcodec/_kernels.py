"""numba kernels for CDF quantization and range coding.

All integer arithmetic is unsigned 64-bit; the coder keeps ``range`` in 32 bits
and ``low`` in 33 bits (bit 32 is the pending carry).
"""

import numpy as np
from numba import njit

PRECISION = 16
TOTAL = 1 << PRECISION
TOP = np.uint64(1 << 24)
MASK32 = np.uint64(0xFFFFFFFF)


@njit(cache=True)
def quantize_pmf_rows(pmf, out):
    """Quantize each row of ``pmf`` [n, A] into cumulative counts ``out`` [n, A+1].

    Counts are round(p * 2^16) floored at 1; any surplus is removed from bins in
    proportion to their spare mass (count - 1), the remainder one at a time from
    the current largest bin. A deficit is added to the largest bin.
    """
    n, a = pmf.shape
    counts = np.empty(a, dtype=np.int64)
    for r in range(n):
        total = 0.0
        for j in range(a):
            total += pmf[r, j]
        s = 0
        for j in range(a):
            c = np.int64(np.floor(pmf[r, j] / total * TOTAL + 0.5))
            if c < 1:
                c = 1
            counts[j] = c
            s += c
        excess = s - TOTAL
        if excess > 0:
            spare = s - a
            taken = 0
            for j in range(a):
                t = (excess * (counts[j] - 1)) // spare
                counts[j] -= t
                taken += t
            rem = excess - taken
            while rem > 0:
                best = 0
                for j in range(1, a):
                    if counts[j] > counts[best]:
                        best = j
                counts[best] -= 1
                rem -= 1
        elif excess < 0:
            best = 0
            for j in range(1, a):
                if counts[j] > counts[best]:
                    best = j
            counts[best] -= excess
        acc = 0
        out[r, 0] = 0
        for j in range(a):
            acc += counts[j]
            out[r, j + 1] = acc


# Encoder state layout (uint64[4]): low, range, cache, cache_size.
# Decoder state layout (uint64[3]): code, range, read position.


@njit(cache=True)
def _shift_low(state, buf, pos):
    low = state[0]
    if low < np.uint64(0xFF000000) or low > MASK32:
        carry = low >> np.uint64(32)
        temp = state[2]
        while True:
            buf[pos] = np.uint8((temp + carry) & np.uint64(0xFF))
            pos += 1
            temp = np.uint64(0xFF)
            state[3] -= np.uint64(1)
            if state[3] == 0:
                break
        state[2] = (low >> np.uint64(24)) & np.uint64(0xFF)
    state[3] += np.uint64(1)
    state[0] = (low & np.uint64(0x00FFFFFF)) << np.uint64(8)
    return pos


@njit(cache=True)
def encode_indexed(symbols, indexes, tables, lengths, offset, state, buf, pos):
    """Encode ``symbols[i]`` with cumulative table ``tables[indexes[i]]``.

    Symbol value v occupies table slot ``v - offset``. Returns the new write
    position, or -(i+1) if symbol i has zero width or lies outside its table.
    """
    p16 = np.uint64(PRECISION)
    for i in range(symbols.shape[0]):
        t = indexes[i]
        s = symbols[i] - offset
        if s < 0 or s >= lengths[t] - 1:
            return -(i + 1)
        lo_c = np.uint64(tables[t, s])
        hi_c = np.uint64(tables[t, s + 1])
        if hi_c <= lo_c:
            return -(i + 1)
        rng = state[1]
        lo = (rng * lo_c) >> p16
        hi = (rng * hi_c) >> p16
        state[0] += lo
        rng = hi - lo
        while rng < TOP:
            rng <<= np.uint64(8)
            pos = _shift_low(state, buf, pos)
        state[1] = rng
    return pos


@njit(cache=True)
def encode_flush(state, buf, pos):
    for _ in range(5):
        pos = _shift_low(state, buf, pos)
    return pos


@njit(cache=True)
def decode_init(state, payload):
    if payload.shape[0] < 5:
        return False
    code = np.uint64(0)
    for k in range(1, 5):
        code = (code << np.uint64(8)) | np.uint64(payload[k])
    state[0] = code
    state[1] = MASK32
    state[2] = np.uint64(5)
    return True


@njit(cache=True)
def decode_indexed(payload, indexes, tables, lengths, offset, state, out):
    """Decode ``len(indexes)`` symbols into ``out``.

    Returns the number decoded; fewer than requested means the payload was
    exhausted (-2) or the code value fell outside the table (-3, corrupt).
    """
    p16 = np.uint64(PRECISION)
    n_bytes = payload.shape[0]
    code = state[0]
    rng = state[1]
    pos = np.int64(state[2])
    for i in range(indexes.shape[0]):
        t = indexes[i]
        n_sym = lengths[t] - 1
        # largest s with (rng * cdf[s]) >> 16 <= code
        lo_s = 0
        hi_s = n_sym
        while hi_s - lo_s > 1:
            mid = (lo_s + hi_s) >> 1
            if ((rng * np.uint64(tables[t, mid])) >> p16) <= code:
                lo_s = mid
            else:
                hi_s = mid
        lo = (rng * np.uint64(tables[t, lo_s])) >> p16
        hi = (rng * np.uint64(tables[t, lo_s + 1])) >> p16
        if code >= hi:
            state[0] = code
            state[1] = rng
            state[2] = np.uint64(pos)
            return -3
        code -= lo
        rng = hi - lo
        while rng < TOP:
            if pos >= n_bytes:
                state[0] = code
                state[1] = rng
                state[2] = np.uint64(pos)
                return -2
            code = ((code << np.uint64(8)) | np.uint64(payload[pos])) & MASK32
            rng <<= np.uint64(8)
            pos += 1
        out[i] = lo_s + offset
    state[0] = code
    state[1] = rng
    state[2] = np.uint64(pos)
    return indexes.shape[0]


FNV_OFFSET = np.uint64(0xCBF29CE484222325)
FNV_PRIME = np.uint64(0x100000001B3)


@njit(cache=True)
def fnv1a64(data, h):
    for i in range(data.shape[0]):
        h = (h ^ np.uint64(data[i])) * FNV_PRIME
    return h
