"""``GDMSR1`` tensor container.

Layout: the 6 magic bytes ``GDMSR1``, a little-endian uint32 header length,
a UTF-8 JSON header, then the tensors as concatenated little-endian float32
arrays. Header entries give each tensor's name, shape and byte offset
relative to the start of the data section.
"""

from __future__ import annotations

import json
import struct

import numpy as np

MAGIC = b"GDMSR1"


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, tensors: dict, meta: dict | None = None) -> None:
    entries, blobs, offset = [], [], 0
    for name, arr in tensors.items():
        # np.array keeps 0-d shapes, which ascontiguousarray would promote to (1,)
        data = np.array(arr, dtype="<f4", order="C")
        entries.append({"name": name, "shape": list(data.shape), "offset": offset})
        blobs.append(data.tobytes())
        offset += data.nbytes
    header = json.dumps({"tensors": entries, "meta": meta or {}}, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        for b in blobs:
            fh.write(b)


def load_checkpoint(path) -> tuple[dict, dict]:
    """Return ``(tensors, meta)``; tensors are float32 arrays."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:6] != MAGIC:
        raise CheckpointError(f"{path}: not a GDMSR1 checkpoint")
    (n,) = struct.unpack("<I", raw[6:10])
    try:
        header = json.loads(raw[10:10 + n].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt header") from exc
    base = 10 + n
    out = {}
    for e in header["tensors"]:
        count = int(np.prod(e["shape"])) if e["shape"] else 1
        start = base + e["offset"]
        if start + 4 * count > len(raw):
            raise CheckpointError(f"{path}: tensor {e['name']!r} truncated")
        out[e["name"]] = np.frombuffer(raw, dtype="<f4", count=count, offset=start).reshape(tuple(e["shape"])).copy()
    return out, header.get("meta", {})
