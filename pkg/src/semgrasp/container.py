"""Deterministic binary container for arrays-plus-metadata blobs.

Layout: 8-byte magic, uint32 header length, canonical-JSON header (sorted
keys, compact separators), raw little-endian C-order array payloads in header
order, and a trailing sha256 of everything before it.  Identical inputs
serialize to identical bytes, so file hashes can stand in for content
equality.  Zip-based formats were rejected for this because archive members
carry timestamps.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

MAGIC = b"SGBIN\x00\x01\x00"

_DTYPES = {"<f8": np.dtype("<f8"), "<i8": np.dtype("<i8"), "<u1": np.dtype("<u1")}
_CANON = {np.dtype(np.float64): "<f8", np.dtype(np.int64): "<i8", np.dtype(np.uint8): "<u1"}


class ContainerError(ValueError):
    pass


def _canonical_json(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False).encode("utf-8")


def to_bytes(arrays: dict[str, np.ndarray], meta: dict) -> bytes:
    entries = []
    payloads = []
    for name in sorted(arrays):
        arr = np.ascontiguousarray(arrays[name])
        if arr.dtype not in _CANON:
            if np.issubdtype(arr.dtype, np.floating):
                arr = np.ascontiguousarray(arr, dtype=np.float64)
            elif np.issubdtype(arr.dtype, np.integer):
                arr = np.ascontiguousarray(arr, dtype=np.int64)
            else:
                raise ContainerError(f"unsupported dtype {arr.dtype} for array {name!r}")
        dt = _CANON[arr.dtype]
        entries.append({"name": name, "dtype": dt, "shape": list(arr.shape)})
        payloads.append(arr.astype(_DTYPES[dt], copy=False).tobytes(order="C"))
    header = _canonical_json({"arrays": entries, "meta": meta})
    out = bytearray()
    out += MAGIC
    out += len(header).to_bytes(4, "little")
    out += header
    for p in payloads:
        out += p
    out += hashlib.sha256(bytes(out)).digest()
    return bytes(out)


def from_bytes(blob: bytes) -> tuple[dict[str, np.ndarray], dict]:
    if len(blob) < len(MAGIC) + 4 + 32 or blob[: len(MAGIC)] != MAGIC:
        raise ContainerError("not a semgrasp container")
    body, digest = blob[:-32], blob[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise ContainerError("container checksum mismatch")
    hl = int.from_bytes(blob[len(MAGIC): len(MAGIC) + 4], "little")
    hstart = len(MAGIC) + 4
    header = json.loads(blob[hstart: hstart + hl].decode("utf-8"))
    arrays: dict[str, np.ndarray] = {}
    off = hstart + hl
    for ent in header["arrays"]:
        dt = _DTYPES[ent["dtype"]]
        shape = tuple(ent["shape"])
        nbytes = dt.itemsize * int(np.prod(shape, dtype=np.int64)) if shape else dt.itemsize
        raw = body[off: off + nbytes]
        if len(raw) != nbytes:
            raise ContainerError(f"truncated payload for array {ent['name']!r}")
        arrays[ent["name"]] = np.frombuffer(raw, dtype=dt).reshape(shape).copy()
        off += nbytes
    if off != len(body):
        raise ContainerError("trailing bytes after payload")
    return arrays, header["meta"]


def save(path, arrays: dict[str, np.ndarray], meta: dict) -> str:
    """Write the container and return its sha256 hex digest."""
    blob = to_bytes(arrays, meta)
    Path(path).write_bytes(blob)
    return hashlib.sha256(blob).hexdigest()


def load(path) -> tuple[dict[str, np.ndarray], dict, str]:
    blob = Path(path).read_bytes()
    arrays, meta = from_bytes(blob)
    return arrays, meta, hashlib.sha256(blob).hexdigest()
