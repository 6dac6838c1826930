"""Parameter bundle for all networks, its layer manifest and the GMXW file format.

GMXW layout (little-endian)::

    b"GMXW" | u16 version | u32 N | u32 K | u32 n_tensors
    n_tensors x ( u16 name_len | name (utf-8) | u8 dtype code | u8 rank | u32 dims[rank] )
    tensor data in manifest order, C order
    u64 FNV-1a of every preceding byte

``init_random`` draws every weight from N(0, 1 / fan_in) with numpy's PCG64
seeded by ``seed``, in manifest order; the second conv of every residual
branch is additionally scaled by ``RESIDUAL_BRANCH_GAIN`` and the layers in
``OUTPUT_GAINS`` by their gain, so untrained latents span several symbols.
Biases start at 0.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from ..checksum import fnv1a64
from ..errors import WeightFormatError
from ..fileio import DTYPE_CODES, atomic_write, dtype_code
from .layers import context_mask

MAGIC = b"GMXW"
VERSION = 1
RESIDUAL_BRANCH_GAIN = 0.5
OUTPUT_GAINS = {"g_a.3.down.weight": 6.0, "h_a.conv3.weight": 3.0, "fusion.conv2.weight": 2.0}
CONTEXT_KERNEL = 5


def _resblock(prefix: str, c: int):
    return [
        (f"{prefix}.conv1.weight", (c, c, 3, 3)),
        (f"{prefix}.conv1.bias", (c,)),
        (f"{prefix}.conv2.weight", (c, c, 3, 3)),
        (f"{prefix}.conv2.bias", (c,)),
    ]


def _conv(name: str, out_c: int, in_c: int, k: int):
    return [(f"{name}.weight", (out_c, in_c, k, k)), (f"{name}.bias", (out_c,))]


def _attention(prefix: str, c: int):
    layout = []
    for branch in ("trunk", "mask"):
        for j in range(3):
            layout += _resblock(f"{prefix}.{branch}.res{j}", c)
    layout += _conv(f"{prefix}.mask.out", c, c, 1)
    return layout


def fusion_widths(N: int, K: int) -> tuple[int, int, int, int]:
    """Channel widths of the fusion network: input, two hidden, output (3*N*K)."""
    c_in, c_out = 4 * N, 3 * N * K
    step = (c_out - c_in) // 3
    return c_in, c_in + step, c_in + 2 * step, c_out


def hyper_mid(N: int) -> int:
    return 3 * N // 2


def manifest(N: int, K: int) -> list[tuple[str, tuple[int, ...]]]:
    """Ordered (name, shape) list for every tensor of a model with N channels, K mixtures."""
    layout: list = []
    for i in range(4):
        c_in = 3 if i == 0 else N
        layout += _resblock(f"g_a.{i}.res0", c_in)
        layout += _resblock(f"g_a.{i}.res1", c_in)
        layout += _conv(f"g_a.{i}.down", N, c_in, 3)
        if i in (1, 3):
            layout += _attention(f"g_a.attn{i}", N)
    layout += _attention("g_s.attn0", N)
    for i in range(4):
        c_out = N if i < 3 else 3
        layout += _resblock(f"g_s.{i}.res0", N)
        layout += _resblock(f"g_s.{i}.res1", N)
        layout += _conv(f"g_s.{i}.up", 4 * c_out, N, 3)
        if i == 1:
            layout += _attention("g_s.attn1", N)
    layout += _conv("h_a.conv0", N, N, 3)
    layout += _conv("h_a.conv1", N, N, 3)
    layout += _conv("h_a.conv2", N, N, 3)
    layout += _conv("h_a.conv3", N, N, 3)
    m = hyper_mid(N)
    layout += _conv("h_s.conv0", N, N, 3)
    layout += _conv("h_s.up1", 4 * N, N, 3)
    layout += _conv("h_s.conv2", m, N, 3)
    layout += _conv("h_s.up3", 4 * m, m, 3)
    layout += _conv("h_s.conv4", 2 * N, m, 3)
    layout += _conv("context.conv", 2 * N, N, CONTEXT_KERNEL)
    c0, c1, c2, c3 = fusion_widths(N, K)
    layout += _conv("fusion.conv0", c1, c0, 1)
    layout += _conv("fusion.conv1", c2, c1, 1)
    layout += _conv("fusion.conv2", c3, c2, 1)
    return layout


@dataclass(frozen=True)
class NetworkWeights:
    N: int
    K: int
    tensors: dict

    def __post_init__(self):
        validate(self)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.tensors[name]

    def to_bytes(self) -> bytes:
        return save_bytes(self)

    @cached_property
    def checksum(self) -> int:
        """FNV-1a of the serialized weight file (its trailing checksum field)."""
        return struct.unpack("<Q", self.to_bytes()[-8:])[0]


def validate(w: NetworkWeights):
    if w.N < 1 or w.K < 1:
        raise WeightFormatError(f"invalid config N={w.N}, K={w.K}")
    expected = manifest(w.N, w.K)
    names = [n for n, _ in expected]
    if set(names) != set(w.tensors):
        missing = sorted(set(names) - set(w.tensors))
        extra = sorted(set(w.tensors) - set(names))
        raise WeightFormatError(f"tensor set mismatch: missing {missing[:3]}, unexpected {extra[:3]}")
    for name, shape in expected:
        t = w.tensors[name]
        if tuple(t.shape) != shape:
            raise WeightFormatError(f"{name}: shape {tuple(t.shape)} != expected {shape}")
        if not np.all(np.isfinite(t)):
            raise WeightFormatError(f"{name}: non-finite values")
    if w.tensors["fusion.conv2.weight"].shape[0] != 3 * w.N * w.K:
        raise WeightFormatError("fusion output must have 3*N*K channels")
    ctx = w.tensors["context.conv.weight"]
    if np.any(ctx[:, :, context_mask(CONTEXT_KERNEL) == 0] != 0):
        raise WeightFormatError("context kernel has nonzero taps at or after the centre")


def init_random(seed: int, N: int, K: int, dtype=np.float32) -> NetworkWeights:
    rng = np.random.default_rng(seed)
    tensors = {}
    for name, shape in manifest(N, K):
        if name.endswith(".bias"):
            tensors[name] = np.zeros(shape, dtype=dtype)
            continue
        fan_in = int(np.prod(shape[1:]))
        t = rng.standard_normal(shape) / np.sqrt(fan_in)
        if ".res" in name and ".conv2." in name:
            t *= RESIDUAL_BRANCH_GAIN
        t *= OUTPUT_GAINS.get(name, 1.0)
        if name == "context.conv.weight":
            t = t * context_mask(CONTEXT_KERNEL)
        tensors[name] = t.astype(dtype)
    return NetworkWeights(N, K, tensors)


def save_bytes(w: NetworkWeights) -> bytes:
    layout = manifest(w.N, w.K)
    head = bytearray(MAGIC + struct.pack("<HIII", VERSION, w.N, w.K, len(layout)))
    body = bytearray()
    for name, shape in layout:
        t = np.asarray(w.tensors[name])
        code = dtype_code(t.dtype)
        raw = name.encode()
        head += struct.pack("<H", len(raw)) + raw + struct.pack("<BB", code, len(shape))
        head += struct.pack(f"<{len(shape)}I", *shape)
        body += np.ascontiguousarray(t, dtype=DTYPE_CODES[code]).tobytes()
    blob = bytes(head + body)
    return blob + struct.pack("<Q", fnv1a64(blob))


def load_bytes(data: bytes) -> NetworkWeights:
    if len(data) < 22 or data[:4] != MAGIC:
        raise WeightFormatError("bad magic: not a GMXW weight file")
    if fnv1a64(data[:-8]) != struct.unpack("<Q", data[-8:])[0]:
        raise WeightFormatError("weight file checksum mismatch (truncated or corrupt)")
    version, N, K, count = struct.unpack_from("<HIII", data, 4)
    if version != VERSION:
        raise WeightFormatError(f"unsupported weight file version {version}")
    off = 18
    entries = []
    try:
        for _ in range(count):
            (n,) = struct.unpack_from("<H", data, off)
            name = data[off + 2 : off + 2 + n].decode()
            off += 2 + n
            code, rank = struct.unpack_from("<BB", data, off)
            shape = struct.unpack_from(f"<{rank}I", data, off + 2)
            off += 2 + 4 * rank
            if code not in DTYPE_CODES:
                raise WeightFormatError(f"{name}: unknown dtype code {code}")
            entries.append((name, DTYPE_CODES[code], shape))
    except (struct.error, UnicodeDecodeError) as e:
        raise WeightFormatError(f"truncated or malformed layer manifest: {e}") from None
    tensors = {}
    for name, dt, shape in entries:
        n_bytes = int(np.prod(shape, dtype=np.int64)) * dt.itemsize
        if off + n_bytes > len(data) - 8:
            raise WeightFormatError(f"{name}: tensor data truncated")
        tensors[name] = np.frombuffer(data, dtype=dt, count=n_bytes // dt.itemsize, offset=off).reshape(shape).copy()
        off += n_bytes
    if off != len(data) - 8:
        raise WeightFormatError("trailing bytes after tensor data")
    return NetworkWeights(N, K, tensors)


def save_weights(w: NetworkWeights, path):
    atomic_write(path, save_bytes(w))


def load_weights(path) -> NetworkWeights:
    return load_bytes(Path(path).read_bytes())
