"""Versioned binary checkpoint container for named parameter arrays.

Layout (little-endian): magic "MKCP", version u32, float width u8 (4 or 8),
record count u32, then per record: name length u16 + utf-8 name, rank u8,
dims u32 x rank, row-major float data.  Writes are atomic (temp + rename).
"""
from __future__ import annotations

import os
import struct
from typing import Mapping

import numpy as np

from morphkit.errors import DataError

_MAGIC = b"MKCP"
_VERSION = 1
_HEADER = "<4sIBI"


def save_arrays(path: str, arrays: Mapping[str, np.ndarray],
                float_width: int = 8) -> None:
    if float_width not in (4, 8):
        raise DataError(f"float width must be 4 or 8, got {float_width}")
    dtype = "<f8" if float_width == 8 else "<f4"
    chunks = [struct.pack(_HEADER, _MAGIC, _VERSION, float_width, len(arrays))]
    for name, arr in arrays.items():
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<B", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        chunks.append(np.ascontiguousarray(arr, dtype=dtype).tobytes())
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(b"".join(chunks))
    os.replace(tmp, path)


def load_arrays(path: str) -> dict[str, np.ndarray]:
    """Read a checkpoint back as float64 arrays, preserving record order."""
    with open(path, "rb") as fh:
        raw = fh.read()
    head = struct.calcsize(_HEADER)
    if len(raw) < head:
        raise DataError(f"{path}: truncated checkpoint")
    magic, version, width, count = struct.unpack_from(_HEADER, raw, 0)
    if magic != _MAGIC:
        raise DataError(f"{path}: not a morphkit checkpoint")
    if version != _VERSION:
        raise DataError(f"{path}: unsupported checkpoint version {version}")
    if width not in (4, 8):
        raise DataError(f"{path}: bad float width {width}")
    dtype = "<f8" if width == 8 else "<f4"
    out: dict[str, np.ndarray] = {}
    offset = head
    try:
        for _ in range(count):
            (name_len,) = struct.unpack_from("<H", raw, offset)
            offset += 2
            name = raw[offset:offset + name_len].decode("utf-8")
            offset += name_len
            (rank,) = struct.unpack_from("<B", raw, offset)
            offset += 1
            dims = struct.unpack_from(f"<{rank}I", raw, offset)
            offset += 4 * rank
            n = int(np.prod(dims)) if rank else 1
            arr = np.frombuffer(raw, dtype=dtype, count=n, offset=offset)
            offset += n * width
            out[name] = arr.astype(np.float64).reshape(dims)
    except (struct.error, ValueError) as exc:
        raise DataError(f"{path}: corrupt checkpoint") from exc
    if offset != len(raw):
        raise DataError(f"{path}: trailing bytes in checkpoint")
    return out
