"""Versioned binary container: magic bytes, JSON metadata, named f64 blobs,
and a trailing SHA-256 over everything before it.

Writes are deterministic (sorted blob names, canonical JSON), so saving the
same content twice produces identical bytes.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .errors import CheckpointError, CheckpointVersionError, ChecksumError

FORMAT_VERSION = 1
_CHECKSUM_LEN = 32


def pack_container(magic: bytes, meta: dict, blobs: dict[str, np.ndarray]) -> bytes:
    if len(magic) != 8:
        raise CheckpointError("magic must be exactly 8 bytes")
    parts = [magic, struct.pack("<I", FORMAT_VERSION)]
    meta_bytes = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode()
    parts.append(struct.pack("<I", len(meta_bytes)))
    parts.append(meta_bytes)
    parts.append(struct.pack("<I", len(blobs)))
    for name in sorted(blobs):
        arr = np.ascontiguousarray(blobs[name], dtype=np.float64)
        encoded = name.encode()
        parts.append(struct.pack("<H", len(encoded)))
        parts.append(encoded)
        parts.append(struct.pack("<B", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape) if arr.ndim else b"")
        parts.append(arr.astype("<f8").tobytes())
    body = b"".join(parts)
    return body + hashlib.sha256(body).digest()


def unpack_container(raw: bytes, magic: bytes) -> tuple[dict, dict[str, np.ndarray]]:
    if len(raw) < 8 + 4 + _CHECKSUM_LEN:
        raise CheckpointError("file is too short to be a valid container")
    if raw[:8] != magic:
        raise CheckpointError(f"bad magic bytes: expected {magic!r}, found {raw[:8]!r}")
    body, checksum = raw[:-_CHECKSUM_LEN], raw[-_CHECKSUM_LEN:]
    if hashlib.sha256(body).digest() != checksum:
        raise ChecksumError("container checksum mismatch; the file is corrupt")

    offset = 8
    (version,) = struct.unpack_from("<I", body, offset)
    offset += 4
    if version != FORMAT_VERSION:
        raise CheckpointVersionError(
            f"container format version {version} is not supported (expected {FORMAT_VERSION})")
    (meta_len,) = struct.unpack_from("<I", body, offset)
    offset += 4
    meta = json.loads(body[offset:offset + meta_len].decode())
    offset += meta_len
    (count,) = struct.unpack_from("<I", body, offset)
    offset += 4

    blobs: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<H", body, offset)
        offset += 2
        name = body[offset:offset + name_len].decode()
        offset += name_len
        (ndim,) = struct.unpack_from("<B", body, offset)
        offset += 1
        shape = struct.unpack_from(f"<{ndim}I", body, offset) if ndim else ()
        offset += 4 * ndim
        size = int(np.prod(shape)) if ndim else 1
        arr = np.frombuffer(body, dtype="<f8", count=size, offset=offset).reshape(shape)
        offset += 8 * size
        blobs[name] = arr.astype(np.float64)
    if offset != len(body):
        raise CheckpointError("container has trailing garbage after the last blob")
    return meta, blobs


def write_container(path, magic: bytes, meta: dict, blobs: dict[str, np.ndarray]) -> None:
    Path(path).write_bytes(pack_container(magic, meta, blobs))


def read_container(path, magic: bytes) -> tuple[dict, dict[str, np.ndarray]]:
    return unpack_container(Path(path).read_bytes(), magic)
