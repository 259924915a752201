"""Flat binary checkpoint format for named parameter arrays.

Layout: magic bytes ``RGL1``, then for each array a little-endian record
of (uint32 name length, utf-8 name, uint32 rank, uint64 dims...,
float64 values).  Records run until end of file.
"""

from __future__ import annotations

import struct

import numpy as np

MAGIC = b"RGL1"


class CheckpointError(ValueError):
    """Malformed checkpoint file."""


def save_checkpoint(arrays, path):
    """Write an ordered mapping of ``name -> array`` to ``path``."""
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        for name, arr in arrays.items():
            data = np.ascontiguousarray(arr, dtype="<f8")
            name_b = name.encode("utf-8")
            fh.write(struct.pack("<I", len(name_b)))
            fh.write(name_b)
            fh.write(struct.pack("<I", data.ndim))
            for d in data.shape:
                fh.write(struct.pack("<Q", d))
            fh.write(data.tobytes())


def load_checkpoint(path):
    """Read a checkpoint back into ``{name: float64 array}``."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != MAGIC:
        raise CheckpointError(f"{path}: bad magic {blob[:4]!r}")
    out = {}
    pos = 4
    while pos < len(blob):
        if pos + 4 > len(blob):
            raise CheckpointError(f"{path}: truncated record header")
        (name_len,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        name = blob[pos:pos + name_len].decode("utf-8")
        pos += name_len
        (rank,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        dims = struct.unpack_from(f"<{rank}Q", blob, pos) if rank else ()
        pos += 8 * rank
        count = int(np.prod(dims)) if rank else 1
        end = pos + 8 * count
        if end > len(blob):
            raise CheckpointError(f"{path}: truncated data for {name!r}")
        arr = np.frombuffer(blob[pos:end], dtype="<f8").reshape(dims).copy()
        pos = end
        out[name] = arr
    return out
