"""Versioned binary checkpoint container.

Layout::

    b"SAILCKPT" | u32 version | u64 header_len | header (UTF-8 JSON) | payload

The header holds ``metadata`` (free-form JSON: config hash, iteration, RNG
state) and ``entries``: ``[{name, shape, offset}]`` in lexicographic name
order. The payload is the concatenation of all arrays as little-endian
float64. Round-trips are bit-exact.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
from pathlib import Path
from typing import Any, Mapping

import numpy as np

MAGIC = b"SAILCKPT"
VERSION = 1


class CheckpointError(ValueError):
    pass


def dumps(arrays: Mapping[str, np.ndarray], metadata: Mapping[str, Any] | None = None) -> bytes:
    entries = []
    chunks = []
    offset = 0
    for name in sorted(arrays):
        a = np.ascontiguousarray(arrays[name], dtype="<f8")
        entries.append({"name": name, "shape": list(a.shape), "offset": offset})
        raw = a.tobytes()
        chunks.append(raw)
        offset += len(raw)
    header = json.dumps(
        {"metadata": dict(metadata or {}), "entries": entries}, sort_keys=True, separators=(",", ":")
    ).encode()
    return MAGIC + struct.pack("<IQ", VERSION, len(header)) + header + b"".join(chunks)


def loads(blob: bytes) -> tuple[dict[str, np.ndarray], dict]:
    if blob[: len(MAGIC)] != MAGIC:
        raise CheckpointError("not a checkpoint (bad magic)")
    try:
        version, hlen = struct.unpack_from("<IQ", blob, len(MAGIC))
        if version != VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        start = len(MAGIC) + struct.calcsize("<IQ")
        header = json.loads(blob[start : start + hlen])
        payload = memoryview(blob)[start + hlen :]
        arrays = {}
        for e in header["entries"]:
            n = int(np.prod(e["shape"])) if e["shape"] else 1
            if e["offset"] + 8 * n > len(payload):
                raise CheckpointError(f"checkpoint truncated inside {e['name']!r}")
            a = np.frombuffer(payload, dtype="<f8", count=n, offset=e["offset"])
            arrays[e["name"]] = a.reshape(e["shape"]).astype(np.float64)
        return arrays, header["metadata"]
    except (struct.error, ValueError, KeyError, TypeError) as exc:
        if isinstance(exc, CheckpointError):
            raise
        raise CheckpointError(f"corrupt checkpoint: {exc}") from exc


def save(path, arrays, metadata=None) -> str:
    """Write atomically; returns the sha256 of the written bytes."""
    blob = dumps(arrays, metadata)
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(blob)
    os.replace(tmp, path)
    return hashlib.sha256(blob).hexdigest()


def load(path):
    return loads(Path(path).read_bytes())


def file_hash(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
