"""64-bit FNV-1a, used for weight files and containers."""

import numpy as np

from . import _kernels


def fnv1a64(data: bytes, seed: int = int(_kernels.FNV_OFFSET)) -> int:
    buf = np.frombuffer(bytes(data), dtype=np.uint8)
    return int(_kernels.fnv1a64(buf, np.uint64(seed)))
