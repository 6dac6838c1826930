"""Binary PPM/PGM images, TNSR tensor files and atomic writes.

TNSR layout (little-endian)::

    b"TNSR" | u8 dtype code | u8 rank | u32 dims[rank] | raw data (C order)

Dtype codes are listed in ``DTYPE_CODES``.
"""

from __future__ import annotations

import os
import re
import struct
import tempfile
from pathlib import Path

import numpy as np

from .errors import CodecError, GeometryError

DTYPE_CODES = {
    1: np.dtype("<f4"),
    2: np.dtype("<f8"),
    3: np.dtype("<i4"),
    4: np.dtype("u1"),
    5: np.dtype("<i8"),
    6: np.dtype("<u2"),
    7: np.dtype("<i2"),
}
_CODE_OF = {dt: code for code, dt in DTYPE_CODES.items()}


class ImageFormatError(CodecError, ValueError):
    pass


def dtype_code(dtype) -> int:
    dt = np.dtype(dtype).newbyteorder("<") if np.dtype(dtype).itemsize > 1 else np.dtype(dtype)
    try:
        return _CODE_OF[dt]
    except KeyError:
        raise ImageFormatError(f"dtype {dtype} has no TNSR code") from None


def atomic_write(path, data: bytes):
    """Write via a temp file in the same directory, then rename over ``path``."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent or ".")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise


def tensor_to_bytes(array) -> bytes:
    a = np.asarray(array)
    code = dtype_code(a.dtype)
    dt = DTYPE_CODES[code]
    header = b"TNSR" + struct.pack("<BB", code, a.ndim) + struct.pack(f"<{a.ndim}I", *a.shape)
    return header + np.ascontiguousarray(a, dtype=dt).tobytes()


def tensor_from_bytes(data: bytes) -> np.ndarray:
    if len(data) < 6 or data[:4] != b"TNSR":
        raise ImageFormatError("not a TNSR file")
    code, rank = struct.unpack_from("<BB", data, 4)
    if code not in DTYPE_CODES:
        raise ImageFormatError(f"unknown dtype code {code}")
    off = 6 + 4 * rank
    if len(data) < off:
        raise ImageFormatError("truncated TNSR header")
    dims = struct.unpack_from(f"<{rank}I", data, 6)
    dt = DTYPE_CODES[code]
    n = int(np.prod(dims, dtype=np.int64)) if rank else 1
    if len(data) != off + n * dt.itemsize:
        raise ImageFormatError(f"TNSR payload is {len(data) - off} bytes, expected {n * dt.itemsize}")
    return np.frombuffer(data, dtype=dt, count=n, offset=off).reshape(dims).copy()


def write_tensor(path, array):
    atomic_write(path, tensor_to_bytes(array))


def read_tensor(path) -> np.ndarray:
    return tensor_from_bytes(Path(path).read_bytes())


_PNM_HEADER = re.compile(rb"\A(P[56])(?:\s+|#[^\n]*\n)+?(\d+)(?:\s+|#[^\n]*\n)+?(\d+)(?:\s+|#[^\n]*\n)+?(\d+)\s")


def pnm_from_bytes(data: bytes) -> np.ndarray:
    """Decode binary PGM (P5) or PPM (P6) into [C, H, W] floats in [0, 1]."""
    m = _PNM_HEADER.match(data)
    if m is None:
        raise ImageFormatError("not a binary PGM/PPM file")
    magic, width, height, maxval = m.group(1), int(m.group(2)), int(m.group(3)), int(m.group(4))
    if not 0 < maxval < 65536:
        raise ImageFormatError(f"bad maxval {maxval}")
    if width < 1 or height < 1:
        raise GeometryError("image dimensions must be positive")
    channels = 3 if magic == b"P6" else 1
    dt = np.dtype("u1") if maxval < 256 else np.dtype(">u2")
    n = width * height * channels
    body = data[m.end() :]
    if len(body) < n * dt.itemsize:
        raise ImageFormatError("truncated PNM raster")
    raster = np.frombuffer(body, dtype=dt, count=n).reshape(height, width, channels)
    return raster.transpose(2, 0, 1).astype(np.float64) / maxval


def pnm_to_bytes(image, maxval: int = 255) -> bytes:
    """Encode a [C, H, W] (C in {1, 3}) or [H, W] image in [0, 1]."""
    x = np.asarray(image, dtype=np.float64)
    if x.ndim == 2:
        x = x[None]
    if x.ndim != 3 or x.shape[0] not in (1, 3):
        raise GeometryError(f"expected [1|3, H, W], got {x.shape}")
    c, h, w = x.shape
    q = np.clip(np.floor(np.clip(x, 0.0, 1.0) * maxval + 0.5), 0, maxval)
    dt = np.dtype("u1") if maxval < 256 else np.dtype(">u2")
    header = b"%s\n%d %d\n%d\n" % (b"P6" if c == 3 else b"P5", w, h, maxval)
    return header + q.transpose(1, 2, 0).astype(dt).tobytes()


def read_image(path) -> np.ndarray:
    """Read PPM/PGM or a TNSR [C, H, W] float tensor; grey images become 3 channels."""
    data = Path(path).read_bytes()
    if data[:4] == b"TNSR":
        x = tensor_from_bytes(data).astype(np.float64)
    else:
        x = pnm_from_bytes(data)
    if x.ndim == 2:
        x = x[None]
    if x.ndim != 3 or x.shape[0] not in (1, 3):
        raise GeometryError(f"image must be [1|3, H, W], got {x.shape}")
    if x.shape[0] == 1:
        x = np.repeat(x, 3, axis=0)
    return x


def write_image(path, image):
    path = Path(path)
    if path.suffix.lower() in (".tnsr", ".tns"):
        write_tensor(path, np.asarray(image, dtype=np.float32))
    else:
        atomic_write(path, pnm_to_bytes(image))
