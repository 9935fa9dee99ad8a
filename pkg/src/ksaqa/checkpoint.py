"""Binary checkpoint format.

Layout (all integers little-endian):

    magic   6 bytes  b"KSAQA1"
    count   u32      number of entries
    entry   repeated:
        name_len u32
        name     UTF-8 bytes
        rank     u32
        dims     rank * u32
        payload  prod(dims) * f32

Arrays are float64 in memory and float32 on disk.  Loading a file saved from
already-float32-valued arrays reproduces them bit-exactly.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import BadMagicError, DuplicateNameError, TruncatedCheckpointError

MAGIC = b"KSAQA1"


def save_arrays(path, arrays: dict[str, np.ndarray]) -> None:
    """Write named arrays; insertion order is preserved on disk."""
    items = list(arrays.items())
    names = [name for name, _ in items]
    if len(set(names)) != len(names):
        raise DuplicateNameError("duplicate tensor name in checkpoint input")
    chunks = [MAGIC, struct.pack("<I", len(items))]
    for name, arr in items:
        nb = name.encode("utf-8")
        a = np.ascontiguousarray(arr, dtype=np.float32)
        chunks.append(struct.pack("<I", len(nb)))
        chunks.append(nb)
        chunks.append(struct.pack("<I", a.ndim))
        chunks.append(struct.pack(f"<{a.ndim}I", *a.shape))
        chunks.append(a.tobytes())
    Path(path).write_bytes(b"".join(chunks))


def load_arrays(path) -> dict[str, np.ndarray]:
    """Read a checkpoint back as float64 arrays, keyed by name."""
    buf = Path(path).read_bytes()
    if len(buf) < len(MAGIC) or buf[: len(MAGIC)] != MAGIC:
        raise BadMagicError(f"{path}: not a KSAQA1 checkpoint")
    off = len(MAGIC)

    def take(n, what):
        nonlocal off
        if off + n > len(buf):
            raise TruncatedCheckpointError(off, f"{path}: truncated while reading {what}")
        piece = buf[off : off + n]
        off += n
        return piece

    (count,) = struct.unpack("<I", take(4, "entry count"))
    arrays: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<I", take(4, "name length"))
        name = take(name_len, "name").decode("utf-8")
        if name in arrays:
            raise DuplicateNameError(f"{path}: duplicate entry {name!r}")
        (rank,) = struct.unpack("<I", take(4, "rank"))
        dims = struct.unpack(f"<{rank}I", take(4 * rank, "dims")) if rank else ()
        n = int(np.prod(dims, dtype=np.int64)) if rank else 1
        payload = take(4 * n, f"payload of {name!r}")
        arrays[name] = np.frombuffer(payload, dtype="<f4").astype(np.float64).reshape(dims)
    return arrays


def save_manifest(path, manifest: dict) -> None:
    Path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def load_manifest(path) -> dict:
    return json.loads(Path(path).read_text())
