"""Parameter checkpoint files.

Layout: 8-byte little-endian header length, a UTF-8 JSON header mapping each
name to its shape and payload byte offset (plus free-form ``meta``), then the
little-endian float64 payload.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np


class CheckpointError(ValueError):
    pass


def encode_checkpoint(tensors, meta=None):
    index = {}
    chunks = []
    offset = 0
    for name in sorted(tensors):  # canonical layout, independent of dict order
        arr = np.asarray(tensors[name], dtype="<f8")  # ascontiguousarray would promote 0-d
        index[name] = {"shape": list(arr.shape), "offset": offset}
        chunks.append(arr.tobytes())
        offset += arr.nbytes
    header = json.dumps({"tensors": index, "meta": meta or {}}, sort_keys=True).encode("utf-8")
    return len(header).to_bytes(8, "little") + header + b"".join(chunks)


def decode_checkpoint(raw):
    if len(raw) < 8:
        raise CheckpointError("checkpoint shorter than its length prefix")
    hlen = int.from_bytes(raw[:8], "little")
    if 8 + hlen > len(raw):
        raise CheckpointError(f"header length {hlen} runs past end of file")
    try:
        header = json.loads(raw[8 : 8 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"bad checkpoint header: {exc}") from None
    payload = raw[8 + hlen :]
    tensors = {}
    for name, spec in header["tensors"].items():
        shape = tuple(spec["shape"])
        count = int(np.prod(shape, dtype=np.int64))
        start = spec["offset"]
        if start + 8 * count > len(payload):
            raise CheckpointError(f"{name}: payload truncated")
        tensors[name] = np.frombuffer(payload, dtype="<f8", count=count, offset=start).reshape(shape).copy()
    return tensors, header.get("meta", {})


def save_checkpoint(path, tensors, meta=None):
    Path(path).write_bytes(encode_checkpoint(tensors, meta))


def load_checkpoint(path):
    return decode_checkpoint(Path(path).read_bytes())
