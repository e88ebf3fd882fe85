"""Reader and writer for the IDX format used by MNIST and Fashion-MNIST.

Layout: two zero bytes, a dtype code, the rank, ``rank`` big-endian uint32
extents, then the row-major payload in big-endian order.
"""

from __future__ import annotations

import gzip
import math
import struct
from pathlib import Path

import numpy as np

from ..errors import FormatError

DTYPES = {
    0x08: np.dtype(">u1"),
    0x09: np.dtype(">i1"),
    0x0B: np.dtype(">i2"),
    0x0C: np.dtype(">i4"),
    0x0D: np.dtype(">f4"),
    0x0E: np.dtype(">f8"),
}
CODES = {v.newbyteorder(">"): k for k, v in DTYPES.items()}


def parse_idx(data: bytes, normalize: bool | None = None) -> np.ndarray:
    """Decode an IDX buffer.

    Unsigned-byte tensors of rank >= 2 are treated as images and scaled to
    ``[0, 1]`` float64; rank-1 tensors are returned as int64 labels. Pass
    ``normalize`` to override that choice.
    """
    if len(data) < 4:
        raise FormatError(f"IDX header needs 4 bytes, got {len(data)}")
    zero, code, rank = struct.unpack(">HBB", data[:4])
    if zero != 0 or code not in DTYPES:
        raise FormatError(f"bad IDX magic {data[:4].hex()}")
    header = 4 + 4 * rank
    if len(data) < header:
        raise FormatError(f"IDX header truncated: need {header} bytes, got {len(data)}")
    dims = struct.unpack(f">{rank}I", data[4:header])
    dtype = DTYPES[code]
    expected = header + math.prod(dims) * dtype.itemsize
    if len(data) != expected:
        kind = "truncated" if len(data) < expected else "has trailing bytes"
        raise FormatError(
            f"IDX payload {kind}: expected {expected} bytes, got {len(data)} "
            f"(mismatch at byte offset {min(len(data), expected)})")
    arr = np.frombuffer(data, dtype=dtype, offset=header).reshape(dims)
    if normalize is None:
        normalize = code == 0x08 and rank >= 2
    if normalize:
        return arr.astype(np.float64) / 255.0
    if np.issubdtype(arr.dtype, np.integer):
        return arr.astype(np.int64)
    return arr.astype(np.float64)


def encode_idx(arr: np.ndarray, dtype_code: int = 0x08) -> bytes:
    """Encode an array as IDX (values must already fit the dtype)."""
    arr = np.asarray(arr)
    dtype = DTYPES[dtype_code]
    head = struct.pack(">HBB", 0, dtype_code, arr.ndim) + struct.pack(f">{arr.ndim}I", *arr.shape)
    return head + np.ascontiguousarray(arr, dtype=dtype).tobytes()


def load_idx(path, normalize: bool | None = None) -> np.ndarray:
    """Read an IDX file, transparently gunzipping ``*.gz``."""
    path = Path(path)
    raw = path.read_bytes()
    if path.suffix == ".gz":
        raw = gzip.decompress(raw)
    return parse_idx(raw, normalize)
