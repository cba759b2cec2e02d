"""Self-describing binary model checkpoints.

Layout: 8-byte magic, uint32 manifest length, UTF-8 JSON manifest listing
(name, kind, shape) per entry, then the little-endian 64-bit float parameter
blocks in manifest order.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"MXPRNET1"


class CheckpointError(Exception):
    pass


def save_checkpoint(entries: list[tuple[str, str, np.ndarray]], path: str | Path) -> None:
    """Write (name, kind, array) entries; kind tags the owning layer type."""
    manifest = [{"name": name, "kind": kind, "shape": list(arr.shape)}
                for name, kind, arr in entries]
    blob = json.dumps(manifest, sort_keys=False).encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for _, _, arr in entries:
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_checkpoint(path: str | Path) -> list[tuple[str, str, np.ndarray]]:
    data = Path(path).read_bytes()
    if len(data) < 12 or data[:8] != MAGIC:
        raise CheckpointError(f"not a model checkpoint: {path}")
    (blob_len,) = struct.unpack_from("<I", data, 8)
    manifest = json.loads(data[12:12 + blob_len].decode("utf-8"))
    offset = 12 + blob_len
    entries = []
    for item in manifest:
        shape = tuple(item["shape"])
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(data, dtype="<f8", count=count, offset=offset).reshape(shape)
        offset += 8 * count
        entries.append((item["name"], item["kind"], arr.astype(np.float64)))
    if offset != len(data):
        raise CheckpointError(f"checkpoint {path} has trailing or missing data")
    return entries
