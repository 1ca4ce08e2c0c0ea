"""Forward/backward primitives on (N, C, H, W) float64 arrays."""
from __future__ import annotations

from functools import lru_cache

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

LEAK = 0.1


def conv2d(x, w, b=None):
    """'Same' zero-padded cross-correlation with an odd square kernel.

    Returns (y, cache); the cache holds the unfolded input.
    """
    n, c, h, wd = x.shape
    o, _, k, _ = w.shape
    p = k // 2
    if k == 1:
        cols = x.transpose(0, 2, 3, 1).reshape(n * h * wd, c)
    else:
        xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
        win = sliding_window_view(xp, (k, k), axis=(2, 3))  # n c h w k k
        cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * h * wd, c * k * k)
    wm = w.reshape(o, -1)
    y = cols @ wm.T
    if b is not None:
        y += b
    return y.reshape(n, h, wd, o).transpose(0, 3, 1, 2), (cols, x.shape)


def conv2d_backward(g, w, cache, need_dx=True):
    cols, xshape = cache
    n, c, h, wd = xshape
    o, _, k, _ = w.shape
    p = k // 2
    gm = g.transpose(0, 2, 3, 1).reshape(n * h * wd, o)
    dw = (gm.T @ cols).reshape(w.shape)
    db = gm.sum(axis=0)
    if not need_dx:
        return None, dw, db
    dcols = gm @ w.reshape(o, -1)
    if k == 1:
        return dcols.reshape(n, h, wd, c).transpose(0, 3, 1, 2), dw, db
    dcols = dcols.reshape(n, h, wd, c, k, k)
    dxp = np.zeros((n, c, h + 2 * p, wd + 2 * p))
    for i in range(k):
        for j in range(k):
            dxp[:, :, i:i + h, j:j + wd] += dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
    return dxp[:, :, p:p + h, p:p + wd], dw, db


def leaky_relu(x):
    return np.where(x > 0, x, LEAK * x)


def leaky_relu_backward(g, x):
    return np.where(x > 0, g, LEAK * g)


def avg_pool2(x):
    n, c, h, w = x.shape
    return x.reshape(n, c, h // 2, 2, w // 2, 2).mean(axis=(3, 5))


def avg_pool2_backward(g):
    return np.repeat(np.repeat(g, 2, axis=2), 2, axis=3) * 0.25


@lru_cache(maxsize=64)
def upsample_matrix(n: int) -> np.ndarray:
    """(2n, n) linear 2x upsampling with half-pixel centers and edge clamping."""
    m = np.zeros((2 * n, n))
    for o in range(2 * n):
        src = (o + 0.5) / 2.0 - 0.5
        i0 = int(np.floor(src))
        frac = src - i0
        lo, hi = min(max(i0, 0), n - 1), min(max(i0 + 1, 0), n - 1)
        m[o, lo] += 1.0 - frac
        m[o, hi] += frac
    m.setflags(write=False)
    return m


def upsample_bilinear2(x):
    uh = upsample_matrix(x.shape[2])
    uw = upsample_matrix(x.shape[3])
    return uh @ x @ uw.T


def upsample_bilinear2_backward(g):
    uh = upsample_matrix(g.shape[2] // 2)
    uw = upsample_matrix(g.shape[3] // 2)
    return uh.T @ g @ uw


def sigmoid(x):
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out
