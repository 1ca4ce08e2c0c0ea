"""Corpus and paired-data ingestion, synthetic dataset loading, task sampling."""
from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from PIL import Image

from .core import DataError, Rng, read_aqf, read_png
from .losses import Example

log = logging.getLogger(__name__)

DEPTH_SUFFIX = ".depth.aqf"
REF_SUFFIX = ".ref.png"


@dataclass(frozen=True)
class CorpusEntry:
    id: str
    rgb_path: Path
    depth_path: Path
    sha256: str


@dataclass
class CorpusIndex:
    entries: list
    warnings: list = field(default_factory=list)

    def __len__(self):
        return len(self.entries)


def _sha256(*paths) -> str:
    h = hashlib.sha256()
    for p in paths:
        h.update(Path(p).read_bytes())
    return h.hexdigest()


def _png_size(path) -> tuple:
    with Image.open(path) as im:
        w, h = im.size
    return h, w


def _aqf_size(path) -> tuple:
    f = read_aqf(path)
    return f.shape[0], f.shape[1]


def index_corpus(directory) -> CorpusIndex:
    """Pair ``<id>.png`` with ``<id>.depth.aqf``; orphans and bad pairs become warnings."""
    d = Path(directory)
    if not d.is_dir():
        raise DataError(f"corpus directory {d} does not exist")
    rgbs = {p.name[: -len(".png")]: p for p in d.iterdir() if p.name.endswith(".png") and not p.name.endswith(REF_SUFFIX)}
    depths = {p.name[: -len(DEPTH_SUFFIX)]: p for p in d.iterdir() if p.name.endswith(DEPTH_SUFFIX)}
    warnings = []
    for orphan in sorted(set(rgbs) ^ set(depths)):
        kind = "depth map" if orphan in rgbs else "rgb image"
        warnings.append(f"{orphan}: missing {kind}")
    entries = []
    for key in sorted(set(rgbs) & set(depths)):
        try:
            rs, ds = _png_size(rgbs[key]), _aqf_size(depths[key])
        except Exception as exc:
            warnings.append(f"{key}: unreadable ({exc})")
            continue
        if rs != ds:
            warnings.append(f"{key}: rgb size {rs} does not match depth size {ds}")
            continue
        entries.append(CorpusEntry(key, rgbs[key], depths[key], _sha256(rgbs[key], depths[key])))
    for w in warnings:
        log.warning("corpus %s: %s", d, w)
    if not entries:
        raise DataError(f"no valid rgb/depth pairs in {d}")
    return CorpusIndex(entries, warnings)


@dataclass
class PairedDataset:
    examples: list
    warnings: list = field(default_factory=list)

    def __len__(self):
        return len(self.examples)


def load_pairs(directory) -> PairedDataset:
    """Load ``<id>.png`` (degraded) with ``<id>.ref.png`` (reference)."""
    d = Path(directory)
    if not d.is_dir():
        raise DataError(f"pairs directory {d} does not exist")
    examples, warnings = [], []
    for p in sorted(d.glob("*.png")):
        if p.name.endswith(REF_SUFFIX):
            continue
        key = p.name[: -len(".png")]
        ref = d / f"{key}{REF_SUFFIX}"
        if not ref.exists():
            warnings.append(f"{key}: missing reference image")
            continue
        I, J = read_png(p), read_png(ref)
        if I.shape != J.shape:
            warnings.append(f"{key}: degraded size {I.shape[:2]} does not match reference {J.shape[:2]}")
            continue
        examples.append(Example(I=I, J=J, source=key))
    for w in warnings:
        log.warning("pairs %s: %s", d, w)
    return PairedDataset(examples, warnings)


@dataclass
class MetaDataset:
    """Synthetic samples grouped by distortion configuration."""

    configs: dict  # distortion id -> params dict
    samples: dict  # distortion id -> list[Example]
    train_ids: list
    val_ids: list
    manifest: dict = field(default_factory=dict)

    def train_examples(self):
        return [e for i in self.train_ids for e in self.samples[i]]

    def val_examples(self):
        return [e for i in self.val_ids for e in self.samples[i]]


def split_configs(ids, seed: int, val_fraction: float = 0.05):
    """Hold out ``val_fraction`` of configuration ids (at least one when >= 2 exist)."""
    ids = sorted(ids)
    n_val = int(round(val_fraction * len(ids)))
    if len(ids) >= 2:
        n_val = max(1, n_val)
    n_val = min(n_val, len(ids) - 1)
    order = Rng(seed).child(2).generator().permutation(len(ids))
    val = sorted(ids[i] for i in order[:n_val])
    train = [i for i in ids if i not in val]
    return train, val


def load_meta_dataset(directory, seed: int = 0, val_fraction: float = 0.05) -> MetaDataset:
    d = Path(directory)
    mpath = d / "manifest.json"
    if not mpath.exists():
        raise DataError(f"{d} has no manifest.json")
    manifest = json.loads(mpath.read_text())
    clean = {im["id"]: read_png(d / im["clean"]) for im in manifest["images"]}
    configs = {c["id"]: c["params"] for c in manifest["distortions"]}
    samples = {cid: [] for cid in configs}
    for s in manifest["samples"]:
        ex = Example(
            I=read_png(d / s["degraded"]),
            J=clean[s["image_id"]],
            t=read_aqf(d / s["t"]),
            B=read_aqf(d / s["b"]),
            source=f"{s['distortion_id']}/{s['image_id']}",
        )
        samples[s["distortion_id"]].append(ex)
    train, val = split_configs(list(configs), seed, val_fraction)
    return MetaDataset(configs, samples, train, val, manifest)


# -- patches and tasks --------------------------------------------------------

def crop_example(ex: Example, size: int, gen: np.random.Generator) -> Example:
    """Random ``size`` x ``size`` crop, reflect-padding images that are too small."""
    fields = [ex.I, ex.J, ex.t, ex.B]
    h, w = ex.I.shape[:2]
    ph, pw = max(0, size - h), max(0, size - w)
    if ph or pw:
        pad = ((ph // 2, ph - ph // 2), (pw // 2, pw - pw // 2), (0, 0))
        fields = [None if f is None else np.pad(f, pad, mode="reflect" if min(h, w) > 1 else "edge") for f in fields]
        h, w = fields[0].shape[:2]
    r = int(gen.integers(0, h - size + 1))
    c = int(gen.integers(0, w - size + 1))
    I, J, t, B = (None if f is None else f[r:r + size, c:c + size] for f in fields)
    return Example(I=I, J=J, t=t, B=B, source=ex.source)


def center_crop(ex: Example, size: int) -> Example:
    h, w = ex.I.shape[:2]
    if h < size or w < size:
        return crop_example(ex, size, np.random.Generator(np.random.Philox(0)))
    r, c = (h - size) // 2, (w - size) // 2
    I, J, t, B = (None if f is None else f[r:r + size, c:c + size] for f in (ex.I, ex.J, ex.t, ex.B))
    return Example(I=I, J=J, t=t, B=B, source=ex.source)


@dataclass
class Task:
    distortion_id: str
    support: list
    query: list


def sample_tasks(ds: MetaDataset, rng: Rng, k: int, support_n: int, query_n: int,
                 patch_size: Optional[int] = None) -> list:
    """k tasks from distinct training configurations with disjoint support/query sets."""
    if len(ds.train_ids) < k:
        raise DataError(f"need >= {k} training distortion configurations, have {len(ds.train_ids)}")
    need = support_n + query_n
    for cid in ds.train_ids:
        if len(ds.samples[cid]) < need:
            raise DataError(
                f"configuration {cid} has {len(ds.samples[cid])} samples; "
                f"{need} required ({support_n} support + {query_n} query)"
            )
    gen = rng.generator()
    chosen = gen.choice(len(ds.train_ids), size=k, replace=False)
    tasks = []
    for ci in chosen:
        cid = ds.train_ids[int(ci)]
        pool = ds.samples[cid]
        order = gen.permutation(len(pool))
        picked = [pool[int(i)] for i in order[:need]]
        if patch_size is not None:
            picked = [crop_example(e, patch_size, gen) for e in picked]
        tasks.append(Task(cid, picked[:support_n], picked[support_n:]))
    return tasks


def minibatches(n: int, batch: int, gen: np.random.Generator):
    order = gen.permutation(n)
    for i in range(0, n, batch):
        yield [int(j) for j in order[i:i + batch]]


def num_batches(n: int, batch: int) -> int:
    return math.ceil(n / batch)
