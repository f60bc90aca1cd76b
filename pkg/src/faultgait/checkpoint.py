"""Binary parameter checkpoints.

Layout (all integers little-endian):

    magic     4 bytes   b"FGC1"
    version   u32       format version (currently 1)
    meta_len  u32       length of the UTF-8 JSON metadata blob
    meta      bytes     {"iteration": int, "seed": int, "config_hash": str, ...}
    n_blocks  u32
    blocks    repeated: name_len u16, name utf-8, ndim u8, shape u32*ndim,
              data float32 little-endian, C order

Parameter blocks are float32 (the pipeline's canonical dtype), so
save -> load reproduces forward outputs bit-exactly.
"""

from __future__ import annotations

import json
import os
import struct

import numpy as np

MAGIC = b"FGC1"
VERSION = 1


class CheckpointError(RuntimeError):
    pass


def save_checkpoint(path, blocks: dict, meta: dict | None = None):
    """Write named float32 parameter blocks plus JSON metadata."""
    meta_bytes = json.dumps(meta or {}, sort_keys=True).encode("utf-8")
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<I", len(meta_bytes)))
        fh.write(meta_bytes)
        fh.write(struct.pack("<I", len(blocks)))
        for name, arr in blocks.items():
            data = np.ascontiguousarray(arr, dtype="<f4")
            name_b = name.encode("utf-8")
            fh.write(struct.pack("<H", len(name_b)))
            fh.write(name_b)
            fh.write(struct.pack("<B", data.ndim))
            fh.write(struct.pack(f"<{data.ndim}I", *data.shape))
            fh.write(data.tobytes())
    os.replace(tmp, path)


def load_checkpoint(path):
    """Read (blocks, meta); blocks are float32 arrays keyed by name."""
    with open(path, "rb") as fh:
        if fh.read(4) != MAGIC:
            raise CheckpointError(f"{path}: bad magic, not a checkpoint file")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != VERSION:
            raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
        (meta_len,) = struct.unpack("<I", fh.read(4))
        meta = json.loads(fh.read(meta_len).decode("utf-8"))
        (n_blocks,) = struct.unpack("<I", fh.read(4))
        blocks = {}
        for _ in range(n_blocks):
            (name_len,) = struct.unpack("<H", fh.read(2))
            name = fh.read(name_len).decode("utf-8")
            (ndim,) = struct.unpack("<B", fh.read(1))
            shape = struct.unpack(f"<{ndim}I", fh.read(4 * ndim))
            count = int(np.prod(shape)) if ndim else 1
            data = np.frombuffer(fh.read(4 * count), dtype="<f4").reshape(shape)
            blocks[name] = np.array(data, dtype=np.float32)
    return blocks, meta
