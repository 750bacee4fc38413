"""Versioned binary container for named float64 arrays.

Layout::

    magic  b"UAVMCSCK"            8 bytes
    version                       uint32 little endian
    header length                 uint64 little endian
    header                        UTF-8 JSON: metadata and [name, shape] entries
    payload                       float64 little endian, arrays in header order
    sha256(all preceding bytes)   32 bytes
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path
from typing import Any

import numpy as np

MAGIC = b"UAVMCSCK"
VERSION = 1


class CheckpointError(ValueError):
    pass


class ChecksumError(CheckpointError):
    pass


class VersionError(CheckpointError):
    pass


def encode(arrays: dict[str, np.ndarray], metadata: dict[str, Any] | None = None) -> bytes:
    entries = [[name, list(np.shape(a))] for name, a in arrays.items()]
    header = json.dumps({"metadata": metadata or {}, "arrays": entries}, sort_keys=True).encode()
    body = b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes() for a in arrays.values())
    blob = MAGIC + struct.pack("<IQ", VERSION, len(header)) + header + body
    return blob + hashlib.sha256(blob).digest()


def decode(blob: bytes) -> tuple[dict[str, np.ndarray], dict[str, Any]]:
    if len(blob) < len(MAGIC) + 12 + 32 or not blob.startswith(MAGIC):
        raise CheckpointError("not a checkpoint file")
    content, digest = blob[:-32], blob[-32:]
    if hashlib.sha256(content).digest() != digest:
        raise ChecksumError("checkpoint checksum mismatch")
    version, header_len = struct.unpack_from("<IQ", content, len(MAGIC))
    if version != VERSION:
        raise VersionError(f"unsupported checkpoint version {version} (expected {VERSION})")
    start = len(MAGIC) + 12
    header = json.loads(content[start:start + header_len].decode())
    offset = start + header_len
    arrays = {}
    for name, shape in header["arrays"]:
        n = int(np.prod(shape, dtype=np.int64))
        arrays[name] = np.frombuffer(content, dtype="<f8", count=n, offset=offset).reshape(shape).copy()
        offset += 8 * n
    if offset != len(content):
        raise CheckpointError("trailing bytes in checkpoint payload")
    return arrays, header["metadata"]


def save(path: str | Path, arrays: dict[str, np.ndarray], metadata: dict[str, Any] | None = None) -> None:
    Path(path).write_bytes(encode(arrays, metadata))


def load(path: str | Path) -> tuple[dict[str, np.ndarray], dict[str, Any]]:
    return decode(Path(path).read_bytes())
