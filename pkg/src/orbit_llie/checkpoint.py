"""Binary parameter checkpoints.

Layout (all integers little-endian)::

    magic    8 bytes  b"OLLIECKP"
    version  u32      currently 1
    records  until EOF, each:
        name_len  u32
        name      name_len bytes, UTF-8
        rank      u32
        extents   rank x u64
        payload   prod(extents) x f64 (little-endian, row-major)

Rank-0 records hold scalars; the denoiser stores its configuration that way
under ``meta/`` names so a checkpoint is self-describing.
"""
from __future__ import annotations

import struct
from pathlib import Path
from typing import Dict, Mapping

import numpy as np

from .errors import DataError

MAGIC = b"OLLIECKP"
VERSION = 1


def dumps(params: Mapping[str, np.ndarray]) -> bytes:
    chunks = [MAGIC, struct.pack("<I", VERSION)]
    for name, value in params.items():
        arr = np.asarray(value, dtype="<f8")
        raw = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(raw)))
        chunks.append(raw)
        chunks.append(struct.pack("<I", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        chunks.append(np.ascontiguousarray(arr).tobytes())
    return b"".join(chunks)


def loads(blob: bytes) -> Dict[str, np.ndarray]:
    if blob[: len(MAGIC)] != MAGIC:
        raise DataError("not a checkpoint: bad magic bytes")
    pos = len(MAGIC)
    try:
        (version,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        if version != VERSION:
            raise DataError(f"unsupported checkpoint version {version}")
        out: Dict[str, np.ndarray] = {}
        while pos < len(blob):
            (nlen,) = struct.unpack_from("<I", blob, pos)
            pos += 4
            name = blob[pos : pos + nlen].decode("utf-8")
            pos += nlen
            (rank,) = struct.unpack_from("<I", blob, pos)
            pos += 4
            shape = struct.unpack_from(f"<{rank}Q", blob, pos)
            pos += 8 * rank
            count = int(np.prod(shape, dtype=np.int64))
            if pos + 8 * count > len(blob):
                raise DataError(f"truncated payload for {name!r}")
            arr = np.frombuffer(blob, dtype="<f8", count=count, offset=pos).reshape(shape)
            pos += 8 * count
            out[name] = arr.astype(np.float64)
    except struct.error as exc:
        raise DataError(f"truncated checkpoint: {exc}") from None
    return out


def save(path, params: Mapping[str, np.ndarray]) -> None:
    Path(path).write_bytes(dumps(params))


def load(path) -> Dict[str, np.ndarray]:
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read checkpoint {path}: {exc.strerror}") from None
    return loads(blob)
