"""Procedural RGB-D scenes for tests: smooth colored blobs over a sloped depth."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from aquaforge.core import write_aqf, write_png


def make_scene(seed: int, h: int = 32, w: int = 32):
    g = np.random.default_rng(seed)
    rows, cols = np.mgrid[0:h, 0:w] / max(h, w)
    img = np.tile(g.uniform(0.2, 0.8, 3), (h, w, 1))
    for _ in range(4):
        cy, cx = g.uniform(0, 1, 2)
        rad = g.uniform(0.15, 0.4)
        blob = np.exp(-((rows - cy) ** 2 + (cols - cx) ** 2) / (2 * rad**2))
        img += blob[:, :, None] * g.uniform(-0.4, 0.4, 3)
    img = np.clip(img, 0, 1)
    tilt = g.uniform(0.5, 3.0)
    depth = 1.0 + tilt * rows + 2.0 * cols * g.uniform(0, 1) + 0.5 * np.sin(6 * cols + seed)
    return img, np.clip(depth, 0.2, None)


def write_corpus(directory, n: int, h: int = 32, w: int = 32, seed: int = 0) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    for i in range(n):
        img, depth = make_scene(seed * 1000 + i, h, w)
        write_png(d / f"scene{i:03d}.png", img)
        write_aqf(d / f"scene{i:03d}.depth.aqf", depth)
    return d
