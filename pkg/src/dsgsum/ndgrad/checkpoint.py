"""Versioned parameter checkpoint files.

Layout: the magic line ``DSGSUM-CKPT-1``, one line of JSON header
(names, shapes, byte offsets, free-form metadata), then raw little-endian
float64 payloads back to back. Values round-trip bit-exactly.
"""
from __future__ import annotations

import json
from pathlib import Path
from typing import Mapping

import numpy as np

MAGIC = b"DSGSUM-CKPT-1\n"


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, arrays: Mapping[str, np.ndarray], meta: dict | None = None) -> None:
    entries, blobs, offset = [], [], 0
    for name in sorted(arrays):
        arr = np.asarray(arrays[name], dtype="<f8")  # ascontiguousarray would lift 0-d to 1-d
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset})
        blobs.append(arr.tobytes())
        offset += arr.nbytes
    header = json.dumps({"tensors": entries, "meta": meta or {}}, sort_keys=True)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(header.encode("utf-8") + b"\n")
        for blob in blobs:
            fh.write(blob)


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    raw = Path(path).read_bytes()
    if not raw.startswith(MAGIC):
        raise CheckpointError(f"{path}: not a DSGSUM-CKPT-1 file")
    rest = raw[len(MAGIC):]
    nl = rest.find(b"\n")
    if nl < 0:
        raise CheckpointError(f"{path}: truncated header")
    header = json.loads(rest[:nl].decode("utf-8"))
    payload = rest[nl + 1:]
    out = {}
    for e in header["tensors"]:
        n = int(np.prod(e["shape"], dtype=np.int64))
        start = e["offset"]
        if start + 8 * n > len(payload):
            raise CheckpointError(f"{path}: payload too short for {e['name']}")
        out[e["name"]] = np.frombuffer(payload, dtype="<f8", count=n, offset=start)
        out[e["name"]] = out[e["name"]].reshape(tuple(e["shape"])).astype(np.float64)
    return out, header.get("meta", {})
