"""Shared image/field conventions, float-field I/O and the counter-based RNG.

Images and per-pixel fields are plain ``numpy`` arrays of shape ``(H, W, 3)``
holding ``float64`` values with channel order (R, G, B).  Depth maps are
``(H, W)`` arrays in meters.  The aliases below only document intent.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np
from PIL import Image

ImageRGB = np.ndarray
ScalarField3 = np.ndarray
DepthMap = np.ndarray

PathLike = Union[str, Path]

CHANNELS = ("R", "G", "B")

AQF_MAGIC = b"AQF1"
_AQF_HEADER = struct.Struct("<4sIII")


class AquaError(Exception):
    """Base class for all errors raised by the package."""


class DataError(AquaError):
    """Bad or inconsistent input data (shapes, values, files)."""


def _first_bad_index(arr: np.ndarray) -> tuple:
    idx = np.argwhere(~np.isfinite(arr))[0]
    return tuple(int(i) for i in idx)


def check_finite(arr: np.ndarray, what: str = "array") -> None:
    if not np.all(np.isfinite(arr)):
        raise DataError(f"{what} has a non-finite value at index {_first_bad_index(arr)}")


def as_image(arr, what: str = "image") -> ImageRGB:
    """Validate and convert ``arr`` to a float64 (H, W, 3) array."""
    a = np.asarray(arr, dtype=np.float64)
    if a.ndim != 3 or a.shape[2] != 3:
        raise DataError(f"{what} must have shape (H, W, 3), got {a.shape}")
    check_finite(a, what)
    return a


def as_depth(arr, what: str = "depth") -> DepthMap:
    d = np.asarray(arr, dtype=np.float64)
    if d.ndim == 3 and d.shape[2] == 1:
        d = d[:, :, 0]
    if d.ndim != 2:
        raise DataError(f"{what} must have shape (H, W), got {d.shape}")
    check_finite(d, what)
    if np.any(d < 0):
        raise DataError(f"{what} has a negative distance at index {tuple(int(i) for i in np.argwhere(d < 0)[0])}")
    return d


def check_same_shape(*arrays: np.ndarray, names=None) -> None:
    shapes = [a.shape for a in arrays]
    if any(s != shapes[0] for s in shapes[1:]):
        label = ", ".join(names) if names else "inputs"
        raise DataError(f"shape mismatch between {label}: {shapes}")


def clamp01(img: np.ndarray) -> np.ndarray:
    """Clamp every value into [0, 1].  Non-finite input is an error."""
    a = np.asarray(img, dtype=np.float64)
    check_finite(a, "clamp01 input")
    return np.clip(a, 0.0, 1.0)


@dataclass(frozen=True)
class Rng:
    """Counter-based random stream.

    A stream is identified by ``seed`` plus a tuple of integer keys; children
    are derived with :meth:`child`, so e.g. ``Rng(seed).child(image, draw)``
    names one fixed sample regardless of evaluation order.
    """

    seed: int
    key: tuple = ()

    def child(self, *keys: int) -> "Rng":
        return Rng(self.seed, self.key + tuple(int(k) for k in keys))

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(int(self.seed), spawn_key=self.key)
        return np.random.Generator(np.random.Philox(ss))


def uniform(rng: Rng, lo: float, hi: float) -> float:
    """First draw of the stream ``rng``, uniform on [lo, hi]."""
    if lo > hi:
        raise ValueError(f"uniform: lo={lo} > hi={hi}")
    if lo == hi:
        return float(lo)
    v = float(rng.generator().uniform(lo, hi))
    return min(max(v, lo), hi)


# -- 8-bit PNG I/O ---------------------------------------------------------

def to_uint8(img: np.ndarray) -> np.ndarray:
    return np.round(clamp01(img) * 255.0).astype(np.uint8)


def read_png(path: PathLike) -> ImageRGB:
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float64)
    return arr / 255.0


def write_png(path: PathLike, img: np.ndarray) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    # fixed encoder settings keep output bytes reproducible
    Image.fromarray(to_uint8(img), mode="RGB").save(path, format="PNG", optimize=False, compress_level=6)


# -- float field I/O ---------------------------------------------------------

def write_aqf(path: PathLike, field: np.ndarray) -> None:
    """Write a (H, W) or (H, W, C) float field in the AQF1 layout."""
    a = np.asarray(field)
    if a.ndim == 2:
        a = a[:, :, None]
    if a.ndim != 3:
        raise DataError(f"float field must be 2-D or 3-D, got shape {a.shape}")
    h, w, c = a.shape
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(_AQF_HEADER.pack(AQF_MAGIC, h, w, c))
        fh.write(np.ascontiguousarray(a, dtype="<f4").tobytes())


def read_aqf(path: PathLike) -> np.ndarray:
    """Read an AQF1 file; returns float64 (H, W, C)."""
    raw = Path(path).read_bytes()
    if len(raw) < _AQF_HEADER.size:
        raise DataError(f"{path}: truncated float-field header")
    magic, h, w, c = _AQF_HEADER.unpack_from(raw)
    if magic != AQF_MAGIC:
        raise DataError(f"{path}: bad magic {magic!r}")
    n = h * w * c
    body = raw[_AQF_HEADER.size:]
    if len(body) != 4 * n:
        raise DataError(f"{path}: expected {4 * n} payload bytes, found {len(body)}")
    return np.frombuffer(body, dtype="<f4").astype(np.float64).reshape(h, w, c)


def read_depth(path: PathLike) -> DepthMap:
    f = read_aqf(path)
    if f.shape[2] != 1:
        raise DataError(f"{path}: depth field must have 1 channel, got {f.shape[2]}")
    return as_depth(f[:, :, 0], str(path))
