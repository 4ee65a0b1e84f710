"""Binary checkpoints.

Layout (all integers little-endian)::

    b"MLCC"                      magic
    u32                          format version
    u64  + bytes                 run config text (UTF-8)
    u32                          tensor count
    per tensor:
        u32 + bytes              name (UTF-8)
        u32                      rank
        u64 * rank               extents
        f32 * prod(extents)      payload, row-major
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"MLCC"
VERSION = 1


class CheckpointError(ValueError):
    pass


def dumps(config_text: str, tensors: dict[str, np.ndarray]) -> bytes:
    parts = [MAGIC, struct.pack("<I", VERSION)]
    cfg = config_text.encode("utf-8")
    parts += [struct.pack("<Q", len(cfg)), cfg, struct.pack("<I", len(tensors))]
    for name, arr in tensors.items():
        arr = np.asarray(arr)
        raw = name.encode("utf-8")
        parts += [struct.pack("<I", len(raw)), raw, struct.pack("<I", arr.ndim)]
        parts += [struct.pack("<Q", d) for d in arr.shape]
        parts.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return b"".join(parts)


def loads(blob: bytes) -> tuple[str, dict[str, np.ndarray]]:
    view = memoryview(blob)
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(view):
            raise CheckpointError("truncated checkpoint")
        out = view[pos:pos + n]
        pos += n
        return out

    if bytes(take(4)) != MAGIC:
        raise CheckpointError("not an MLCC checkpoint (bad magic)")
    (version,) = struct.unpack("<I", take(4))
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}, expected {VERSION}")
    (cfg_len,) = struct.unpack("<Q", take(8))
    config_text = bytes(take(cfg_len)).decode("utf-8")
    (count,) = struct.unpack("<I", take(4))
    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<I", take(4))
        name = bytes(take(name_len)).decode("utf-8")
        (rank,) = struct.unpack("<I", take(4))
        shape = struct.unpack(f"<{rank}Q", take(8 * rank)) if rank else ()
        n = int(np.prod(shape)) if rank else 1
        arr = np.frombuffer(take(4 * n), dtype="<f4").reshape(shape).copy()
        tensors[name] = arr
    if pos != len(view):
        raise CheckpointError("trailing bytes after last tensor")
    return config_text, tensors


def save(path, config_text: str, tensors: dict[str, np.ndarray]) -> None:
    Path(path).write_bytes(dumps(config_text, tensors))


def load(path) -> tuple[str, dict[str, np.ndarray]]:
    return loads(Path(path).read_bytes())
