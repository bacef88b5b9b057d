"""FMAP tensor file I/O, implemented independently against the wire format.

Layout: magic ``b"FMAP1\\n"``, little-endian u32 ndim, ndim u64 extents,
u8 dtype code (0 = f32, 1 = f64), u16 label length + UTF-8 label, raw
row-major payload. This module shares no code with the pruning engine; the
byte format is the contract.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"FMAP1\n"
_CODES = {np.dtype("<f4"): 0, np.dtype("<f8"): 1}
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}


def write_fmap(arr: np.ndarray, path: str | Path, label: str = "") -> None:
    arr = np.asarray(arr)
    if arr.dtype not in (np.float32, np.float64):
        arr = arr.astype(np.float32)
    dtype = np.dtype("<f4") if arr.dtype == np.float32 else np.dtype("<f8")
    if arr.ndim == 0 or any(d < 1 for d in arr.shape):
        raise ValueError(f"invalid tensor shape {arr.shape}")
    payload = np.ascontiguousarray(arr, dtype=dtype).tobytes()
    encoded = label.encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", arr.ndim))
        fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        fh.write(struct.pack("<B", _CODES[dtype]))
        fh.write(struct.pack("<H", len(encoded)))
        fh.write(encoded)
        fh.write(payload)


def read_fmap(path: str | Path) -> tuple[np.ndarray, str]:
    with open(path, "rb") as fh:
        if fh.read(len(MAGIC)) != MAGIC:
            raise ValueError(f"{path}: not an FMAP file")
        (ndim,) = struct.unpack("<I", fh.read(4))
        dims = struct.unpack(f"<{ndim}Q", fh.read(8 * ndim))
        (code,) = struct.unpack("<B", fh.read(1))
        (label_len,) = struct.unpack("<H", fh.read(2))
        label = fh.read(label_len).decode("utf-8")
        dtype = _DTYPES[code]
        n = int(np.prod(dims))
        payload = fh.read(n * dtype.itemsize)
        if len(payload) != n * dtype.itemsize:
            raise ValueError(f"{path}: truncated payload")
        arr = np.frombuffer(payload, dtype=dtype).reshape(dims).copy()
    return arr, label
