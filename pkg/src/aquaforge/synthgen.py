"""Synthetic underwater rendering of RGB-D scenes.

Per distortion configuration a water type and a set of lighting/camera
parameters are drawn; every corpus image is then rendered as

    I = t * J_gt * E / E_S + B * (1 - t),    B = clamp(kappa * E / c)

with ``E`` the mix of attenuated surface light and a Gaussian artificial spot.
"""
from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .core import (
    DataError,
    Rng,
    as_depth,
    as_image,
    check_same_shape,
    clamp01,
    read_depth,
    read_png,
    uniform,
    write_aqf,
    write_png,
)
from .uwmodel import Attenuation, transmission_from_depth

log = logging.getLogger(__name__)

# e^{-c} per meter, stored (R, G, B)
WATER_TYPE_TABLE = {
    "I": (0.805, 0.961, 0.982),
    "II": (0.80, 0.925, 0.94),
    "III": (0.75, 0.885, 0.89),
    "B": (0.70, 0.80, 0.88),
    "3": (0.71, 0.82, 0.80),
    "G": (0.69, 0.79, 0.75),
    "5": (0.67, 0.73, 0.67),
    "7": (0.62, 0.61, 0.50),
    "Y": (0.61, 0.60, 0.40),
}
WATER_TYPE_NAMES = tuple(WATER_TYPE_TABLE)

DEPTH_RANGE = (5.0, 20.0)
SURFACE_LIGHT_RANGE = (0.7, 1.0)
ART_LIGHT_RANGE = (0.7, 1.0)
SIGMA_RATE_RANGE = (0.2, 1.1)
OMEGA_A_RANGE = (0.0, 1.0)
KAPPA_RANGE = (0.7, 1.1)

# corpora whose depths exceed the upper bound are rescaled into this range
DEPTH_RESCALE_RANGE = (0.5, 10.0)


@dataclass(frozen=True)
class WaterType:
    name: str
    attenuation: Attenuation

    @classmethod
    def named(cls, name: str) -> "WaterType":
        try:
            return cls(name, Attenuation(WATER_TYPE_TABLE[name]))
        except KeyError:
            raise DataError(f"unknown water type {name!r}; expected one of {', '.join(WATER_TYPE_NAMES)}") from None


def all_water_types() -> list:
    return [WaterType.named(n) for n in WATER_TYPE_NAMES]


@dataclass(frozen=True)
class SynthParams:
    water_type: WaterType
    D: float
    E_S: tuple
    E_art: tuple
    light_center: tuple  # (row, col) in pixels of `shape`
    shape: tuple  # (H, W) the center was drawn for
    sigma_rate: float
    omega_a: float
    omega_b: float
    kappa: float

    def validate(self) -> None:
        def within(name, v, lo, hi):
            if not (lo <= v <= hi):
                raise DataError(f"{name}={v} outside [{lo}, {hi}]")

        within("D", self.D, *DEPTH_RANGE)
        for v in self.E_S:
            within("E_S", v, *SURFACE_LIGHT_RANGE)
        for v in self.E_art:
            within("E_art", v, *ART_LIGHT_RANGE)
        within("sigma_rate", self.sigma_rate, *SIGMA_RATE_RANGE)
        within("omega_a", self.omega_a, *OMEGA_A_RANGE)
        within("kappa", self.kappa, *KAPPA_RANGE)
        if self.omega_a + self.omega_b != 1.0:
            raise DataError("omega_a + omega_b must equal 1")
        h, w = self.shape
        r, c = self.light_center
        if not (0 <= r < h and 0 <= c < w):
            raise DataError(f"light center {self.light_center} outside image {self.shape}")

    def center_for(self, shape) -> tuple:
        """Light center mapped proportionally onto an image of ``shape``."""
        h0, w0 = self.shape
        h, w = shape
        if (h, w) == (h0, w0):
            return tuple(float(v) for v in self.light_center)
        r, c = self.light_center
        return (min(math.floor(r * h / h0), h - 1), min(math.floor(c * w / w0), w - 1))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["water_type"] = self.water_type.name
        d["attenuation"] = list(self.water_type.attenuation.factors)
        for k in ("E_S", "E_art", "light_center", "shape"):
            d[k] = list(d[k])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SynthParams":
        return cls(
            water_type=WaterType.named(d["water_type"]),
            D=float(d["D"]),
            E_S=tuple(float(v) for v in d["E_S"]),
            E_art=tuple(float(v) for v in d["E_art"]),
            light_center=tuple(int(v) for v in d["light_center"]),
            shape=tuple(int(v) for v in d["shape"]),
            sigma_rate=float(d["sigma_rate"]),
            omega_a=float(d["omega_a"]),
            omega_b=float(d["omega_b"]),
            kappa=float(d["kappa"]),
        )


@dataclass
class SynthSample:
    I: np.ndarray
    J: np.ndarray
    t: np.ndarray
    B: np.ndarray
    params: SynthParams
    provenance: str = ""
    E: Optional[np.ndarray] = field(default=None, repr=False)


def sample_params(rng: Rng, wt: WaterType, shape) -> SynthParams:
    """Draw one configuration; draw ``i`` always comes from ``rng.child(i)``."""
    h, w = (int(v) for v in shape)
    draws = iter(range(1000))

    def u(lo, hi):
        return uniform(rng.child(next(draws)), lo, hi)

    D = u(*DEPTH_RANGE)
    E_S = tuple(u(*SURFACE_LIGHT_RANGE) for _ in range(3))
    E_art = tuple(u(*ART_LIGHT_RANGE) for _ in range(3))
    row = min(int(u(0.0, h)), h - 1)
    col = min(int(u(0.0, w)), w - 1)
    sigma_rate = u(*SIGMA_RATE_RANGE)
    omega_a = u(*OMEGA_A_RANGE)
    kappa = u(*KAPPA_RANGE)
    p = SynthParams(
        water_type=wt,
        D=D,
        E_S=E_S,
        E_art=E_art,
        light_center=(row, col),
        shape=(h, w),
        sigma_rate=sigma_rate,
        omega_a=omega_a,
        omega_b=1.0 - omega_a,
        kappa=kappa,
    )
    return p


def artificial_light_field(p: SynthParams, shape) -> np.ndarray:
    h, w = (int(v) for v in shape)
    r0, c0 = p.center_for((h, w))
    sigma_px = p.sigma_rate * w
    if sigma_px <= 0:
        raise DataError("artificial light spread must be positive")
    rows = np.arange(h, dtype=np.float64)[:, None]
    cols = np.arange(w, dtype=np.float64)[None, :]
    profile = np.exp(-((rows - r0) ** 2 + (cols - c0) ** 2) / (2.0 * sigma_px**2))
    return profile[:, :, None] * np.asarray(p.E_art, dtype=np.float64)[None, None, :]


def illumination(p: SynthParams, d) -> np.ndarray:
    d = as_depth(d)
    factors = np.asarray(p.water_type.attenuation.factors)
    surface = p.omega_a * np.asarray(p.E_S) * factors**p.D
    art = artificial_light_field(p, d.shape)
    return surface[None, None, :] + p.omega_b * art * np.power(factors[None, None, :], d[:, :, None])


def background_light(E, a: Attenuation, kappa: float) -> np.ndarray:
    E = np.asarray(E, dtype=np.float64)
    return clamp01(kappa * E / a.coefficients[None, None, :])


def synthesize(Jgt, d, p: SynthParams, provenance: str = "") -> SynthSample:
    J = as_image(Jgt, "J_gt")
    d = as_depth(d)
    if J.shape[:2] != d.shape:
        raise DataError(f"shape mismatch between J_gt {J.shape[:2]} and depth {d.shape}")
    att = p.water_type.attenuation
    t = transmission_from_depth(d, att)
    E = illumination(p, d)
    B = background_light(E, att, p.kappa)
    relit = J * (E / np.asarray(p.E_S)[None, None, :])
    I = clamp01(t * relit + B * (1.0 - t))
    return SynthSample(I=I, J=J, t=t, B=B, params=p, provenance=provenance, E=E)


def rescale_depth(d: np.ndarray):
    """Map depths into DEPTH_RESCALE_RANGE when the native range exceeds it."""
    lo, hi = DEPTH_RESCALE_RANGE
    dmax, dmin = float(d.max()), float(d.min())
    if dmax <= hi:
        return d, False
    span = dmax - dmin
    if span == 0:
        return np.full_like(d, hi), True
    return lo + (d - dmin) / span * (hi - lo), True


def distortion_id(type_name: str, draw: int) -> str:
    return f"{type_name}-{draw}"


def distortion_configs(seed: int, draws_per_type: int, shape, types: Optional[Sequence[str]] = None) -> list:
    """(id, SynthParams) for every requested water type and draw, in table order."""
    if draws_per_type < 1:
        raise DataError("draws_per_type must be >= 1")
    wanted = list(WATER_TYPE_NAMES) if types is None else list(types)
    for name in wanted:
        WaterType.named(name)
    root = Rng(seed).child(0)
    out = []
    for ti, name in enumerate(WATER_TYPE_NAMES):
        if name not in wanted:
            continue
        wt = WaterType.named(name)
        for k in range(draws_per_type):
            out.append((distortion_id(name, k), sample_params(root.child(ti, k), wt, shape)))
    return out


def build_dataset(corpus, out_dir, seed: int, draws_per_type: int, types=None, threads: int = 1,
                  config: Optional[dict] = None) -> dict:
    """Render every corpus image under every distortion configuration.

    ``corpus`` is a :class:`~aquaforge.dataio.CorpusIndex`.  Writes
    ``<out>/clean/<id>.png``, ``<out>/<dist>/<id>.png|.t.aqf|.b.aqf`` and
    ``manifest.json``; returns the manifest dict.
    """
    entries = list(corpus.entries)
    if not entries:
        raise DataError("corpus is empty")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    loaded = []
    for e in entries:
        try:
            rgb = read_png(e.rgb_path)
            depth = read_depth(e.depth_path)
            check_same_shape(rgb[:, :, 0], depth, names=("rgb", "depth"))
        except Exception as exc:  # unreadable entries are skipped, not fatal
            log.warning("skipping corpus entry %s: %s", e.id, exc)
            continue
        depth, rescaled = rescale_depth(depth)
        loaded.append((e.id, rgb, depth, rescaled))
    if not loaded:
        raise DataError("no readable corpus entries")

    ref_shape = loaded[0][1].shape[:2]
    configs = distortion_configs(seed, draws_per_type, ref_shape, types)

    images = []
    for img_id, rgb, _, rescaled in loaded:
        rel = f"clean/{img_id}.png"
        write_png(out / rel, rgb)
        images.append({"id": img_id, "clean": rel, "depth_rescaled": rescaled})

    jobs = [(img, cfg) for cfg in configs for img in loaded]

    def render(job):
        (img_id, rgb, depth, _), (dist_id, params) = job
        s = synthesize(rgb, depth, params, provenance=img_id)
        base = f"{dist_id}/{img_id}"
        write_png(out / f"{base}.png", s.I)
        write_aqf(out / f"{base}.t.aqf", s.t)
        write_aqf(out / f"{base}.b.aqf", s.B)
        return {
            "image_id": img_id,
            "distortion_id": dist_id,
            "degraded": f"{base}.png",
            "t": f"{base}.t.aqf",
            "b": f"{base}.b.aqf",
        }

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            samples = list(pool.map(render, jobs))
    else:
        samples = [render(j) for j in jobs]

    manifest = {
        "format": "aquaforge-synth/1",
        "seed": int(seed),
        "draws_per_type": int(draws_per_type),
        "types": [n for n in WATER_TYPE_NAMES if types is None or n in types],
        "config": config or {},
        "distortions": [{"id": did, "params": p.to_dict()} for did, p in configs],
        "images": images,
        "samples": samples,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest
