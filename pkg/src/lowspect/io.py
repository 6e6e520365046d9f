"""Bit-exact array persistence (SPCT format).

Layout: magic ``SPCT`` (4 bytes), u8 version = 1, u8 ndim, ndim little-endian
u32 extents, then product(extents) little-endian f32 values, row-major with
the last index fastest.  No padding anywhere.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"SPCT"
VERSION = 1

_HEADER = struct.Struct("<4sBB")


class SpctError(Exception):
    """Malformed or unreadable SPCT file."""


def save_array(path, data: np.ndarray) -> None:
    """Write ``data`` to ``path``; round-trips bit-exactly through load_array.

    Values are stored as f32; pass f32 data (or values exactly representable
    in f32) if bit-exact persistence matters.
    """
    arr = np.asarray(data)
    if arr.ndim < 1:
        arr = arr.reshape(1)
    if arr.ndim > 255:
        raise SpctError("too many dimensions for SPCT format")
    for extent in arr.shape:
        if extent > 0xFFFFFFFF:
            raise SpctError(f"extent {extent} overflows the u32 header field")
    payload = np.ascontiguousarray(arr, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, arr.ndim))
        fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        fh.write(payload.tobytes())


def load_array(path) -> np.ndarray:
    """Read an SPCT file; returns exactly what save_array wrote (f32)."""
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise SpctError(f"{path}: truncated header")
    magic, version, ndim = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise SpctError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise SpctError(f"{path}: unsupported version {version}")
    dims_end = _HEADER.size + 4 * ndim
    if len(raw) < dims_end:
        raise SpctError(f"{path}: truncated extents")
    dims = struct.unpack_from(f"<{ndim}I", raw, _HEADER.size)
    count = 1
    for extent in dims:
        count *= extent
    expected = dims_end + 4 * count
    if len(raw) != expected:
        raise SpctError(
            f"{path}: payload has {len(raw) - dims_end} bytes, expected {4 * count}"
        )
    data = np.frombuffer(raw, dtype="<f4", count=count, offset=dims_end)
    return data.reshape(dims).copy()
