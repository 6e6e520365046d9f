"""Model persistence (SPCK format).

Layout: magic ``SPCK``, u8 version = 1, u32 entry count; each entry is a
u16 name length, the UTF-8 name, u8 ndim, ndim u32 extents and an f32
little-endian payload.  Entries appear in layer order and cover parameters
plus batchnorm running statistics, so a checkpoint alone determines
inference output.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .model import PRESETS, CnnrModel, build_cnnr

MAGIC = b"SPCK"
VERSION = 1


class CheckpointError(Exception):
    pass


def save_checkpoint(model: CnnrModel, path) -> None:
    entries = model.named_state()
    blob = bytearray()
    blob += MAGIC
    blob += struct.pack("<BI", VERSION, len(entries))
    for name, array in entries.items():
        encoded = name.encode("utf-8")
        blob += struct.pack("<H", len(encoded))
        blob += encoded
        blob += struct.pack("<B", array.ndim)
        blob += struct.pack(f"<{array.ndim}I", *array.shape)
        blob += np.ascontiguousarray(array, dtype="<f4").tobytes()
    Path(path).write_bytes(bytes(blob))


def read_entries(path) -> dict:
    raw = Path(path).read_bytes()
    if len(raw) < 9 or raw[:4] != MAGIC:
        raise CheckpointError(f"{path}: not an SPCK checkpoint")
    version, count = struct.unpack_from("<BI", raw, 4)
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    offset = 9
    entries = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<H", raw, offset)
        offset += 2
        name = raw[offset : offset + name_len].decode("utf-8")
        offset += name_len
        (ndim,) = struct.unpack_from("<B", raw, offset)
        offset += 1
        shape = struct.unpack_from(f"<{ndim}I", raw, offset)
        offset += 4 * ndim
        size = int(np.prod(shape)) if ndim else 1
        data = np.frombuffer(raw, dtype="<f4", count=size, offset=offset)
        offset += 4 * size
        entries[name] = data.reshape(shape).copy()
    if offset != len(raw):
        raise CheckpointError(f"{path}: {len(raw) - offset} trailing bytes")
    return entries


def _detect_preset(entries: dict) -> str:
    for preset, cfg in PRESETS.items():
        rows = 32 // 8
        flat = cfg["block4_channels"] * rows * (cfg["n_bins"] // 8)
        if entries.get("enc5_dense.weight", np.empty(0)).shape == (
            cfg["bottleneck"],
            flat,
        ):
            return preset
    raise CheckpointError("checkpoint does not match any known preset")


def load_checkpoint(path, dtype=np.float32) -> CnnrModel:
    """Rebuild a model from a checkpoint; preset is inferred from shapes."""
    entries = read_entries(path)
    model = build_cnnr(_detect_preset(entries), seed=0, dtype=dtype)
    state = model.named_state()
    if set(state) != set(entries):
        missing = sorted(set(state) ^ set(entries))
        raise CheckpointError(f"checkpoint entries do not match model: {missing[:5]}")
    for name, target in state.items():
        value = entries[name]
        if value.shape != target.shape:
            raise CheckpointError(
                f"{name}: shape {value.shape} != expected {target.shape}"
            )
        target[...] = value.astype(dtype)
    return model
