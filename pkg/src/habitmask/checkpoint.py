"""Binary checkpoint container for named parameter tables.

Layout: magic "HCKP", version u16, u32 JSON config length + UTF-8 JSON,
u32 parameter count, then per parameter: u16 name length + name, u8 rank,
rank u32 extents, little-endian f32 data.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .errors import FormatError

MAGIC = b"HCKP"
VERSION = 1


def save_checkpoint(path, params: dict, config: dict | None = None) -> None:
    """params maps name -> array-like (saved as f32, insertion order kept)."""
    cfg_blob = json.dumps(config or {}, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<H", VERSION))
        f.write(struct.pack("<I", len(cfg_blob)))
        f.write(cfg_blob)
        f.write(struct.pack("<I", len(params)))
        for name, value in params.items():
            arr = np.ascontiguousarray(np.asarray(value), dtype="<f4")
            name_b = name.encode("utf-8")
            f.write(struct.pack("<H", len(name_b)))
            f.write(name_b)
            f.write(struct.pack("<B", arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            f.write(arr.tobytes())


def load_checkpoint(path) -> tuple[dict, dict]:
    """Returns (params, config); params values are float32 arrays."""
    with open(path, "rb") as f:
        blob = f.read()
    off = 0

    def take(n):
        nonlocal off
        if off + n > len(blob):
            raise FormatError(f"{path}: truncated at byte {off}")
        chunk = blob[off : off + n]
        off += n
        return chunk

    if take(4) != MAGIC:
        raise FormatError(f"{path}: bad magic")
    (version,) = struct.unpack("<H", take(2))
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    (cfg_len,) = struct.unpack("<I", take(4))
    try:
        config = json.loads(take(cfg_len).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise FormatError(f"{path}: bad config header: {e}") from None
    (count,) = struct.unpack("<I", take(4))
    params = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<H", take(2))
        name = take(name_len).decode("utf-8")
        (rank,) = struct.unpack("<B", take(1))
        shape = struct.unpack(f"<{rank}I", take(4 * rank))
        n = int(np.prod(shape)) if rank else 1
        data = np.frombuffer(take(4 * n), dtype="<f4").reshape(shape)
        params[name] = np.array(data, dtype=np.float32)
    if off != len(blob):
        raise FormatError(f"{path}: {len(blob) - off} trailing bytes")
    return params, config
