"""Checkpoint files: ``AQCK`` header, three float32 vectors, CRC32 trailer."""
from __future__ import annotations

import struct
import zlib
from pathlib import Path

import numpy as np

from ..core import AquaError
from .arch import ArchConfig, ModelParams, param_count

MAGIC = b"AQCK"
VERSION = 1
_HEADER = struct.Struct("<4sIIIIIBBIQ")
_COUNT = struct.Struct("<Q")
_CRC = struct.Struct("<I")


class CheckpointError(AquaError):
    pass


def to_bytes(p: ModelParams) -> bytes:
    c = p.config
    parts = [
        _HEADER.pack(
            MAGIC, VERSION, c.num_enc_blocks, c.num_dec_blocks, c.base_channels, c.max_channels,
            int(c.use_skip), int(c.use_shortcut), c.patch_size, p.seed,
        )
    ]
    for v in p.vectors():
        parts.append(_COUNT.pack(v.size))
        parts.append(np.ascontiguousarray(v, dtype="<f4").tobytes())
    body = b"".join(parts)
    return body + _CRC.pack(zlib.crc32(body))


def from_bytes(raw: bytes) -> ModelParams:
    if len(raw) < _HEADER.size + _CRC.size:
        raise CheckpointError("checkpoint is truncated")
    body, (crc,) = raw[:-_CRC.size], _CRC.unpack(raw[-_CRC.size:])
    if zlib.crc32(body) != crc:
        raise CheckpointError("checkpoint CRC mismatch")
    magic, version, ne, nd, base, mx, skip, short, patch, seed = _HEADER.unpack_from(body)
    if magic != MAGIC:
        raise CheckpointError(f"bad checkpoint magic {magic!r}")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    cfg = ArchConfig(ne, nd, base, mx, bool(skip), bool(short), patch)
    expected = param_count(cfg)
    off = _HEADER.size
    vecs = []
    for _ in range(3):
        (n,) = _COUNT.unpack_from(body, off)
        off += _COUNT.size
        if n != expected:
            raise CheckpointError(f"vector length {n} does not match architecture ({expected})")
        vecs.append(np.frombuffer(body, dtype="<f4", count=n, offset=off).astype(np.float64))
        off += 4 * n
    if off != len(body):
        raise CheckpointError("trailing bytes in checkpoint")
    return ModelParams(cfg, *vecs, seed=seed)


def save(p: ModelParams, path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_bytes(to_bytes(p))


def load(path) -> ModelParams:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    return from_bytes(raw)
