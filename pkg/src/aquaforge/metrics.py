"""Full-reference (MSE, PSNR, SSIM) and no-reference (UCIQE, UIQM) image metrics.

All functions take (H, W, 3) RGB arrays with values in [0, 1].
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import ndimage
from skimage.color import rgb2hsv, rgb2lab

from .core import DataError, as_image, check_same_shape

# UCIQE weights for (chroma spread, luminance contrast, mean saturation)
UCIQE_COEFFS = (0.4680, 0.2745, 0.2575)
# UIQM weights for (colorfulness, sharpness, contrast)
UIQM_COEFFS = (0.0282, 0.2953, 3.5753)

SSIM_WINDOW = 8
SSIM_C1 = 0.01**2
SSIM_C2 = 0.03**2

# largest CIELab chroma reachable in sRGB (pure blue); scales sigma_c into [0, 1]
LAB_CHROMA_MAX = 133.80416666129122
LUMA_TAIL = 0.01  # fraction of pixels in each luminance tail for con_l

UICM_TRIM = 0.1  # alpha-trim on each side of the opponent-channel distributions
UIQM_BLOCK = 8
UISM_CHANNEL_WEIGHTS = (0.299, 0.587, 0.114)


def _pair(a, b):
    a = as_image(a, "a")
    b = as_image(b, "b")
    check_same_shape(a, b, names=("a", "b"))
    return a, b


def mse(a, b) -> float:
    a, b = _pair(a, b)
    return float(np.mean((a - b) ** 2))


def psnr(a, b) -> float:
    """Peak 1.0; identical images give ``inf``."""
    m = mse(a, b)
    if m == 0:
        return math.inf
    return 10.0 * math.log10(1.0 / m)


def ssim(a, b) -> float:
    """Mean SSIM over all 8x8 windows, averaged over channels."""
    a, b = _pair(a, b)
    if min(a.shape[:2]) < SSIM_WINDOW:
        raise DataError(f"ssim needs images of at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {a.shape[:2]}")
    scores = []
    for ch in range(3):
        wa = sliding_window_view(a[:, :, ch], (SSIM_WINDOW, SSIM_WINDOW))
        wb = sliding_window_view(b[:, :, ch], (SSIM_WINDOW, SSIM_WINDOW))
        mu_a = wa.mean(axis=(2, 3))
        mu_b = wb.mean(axis=(2, 3))
        var_a = ((wa - mu_a[..., None, None]) ** 2).mean(axis=(2, 3))
        var_b = ((wb - mu_b[..., None, None]) ** 2).mean(axis=(2, 3))
        cov = ((wa - mu_a[..., None, None]) * (wb - mu_b[..., None, None])).mean(axis=(2, 3))
        num = (2 * mu_a * mu_b + SSIM_C1) * (2 * cov + SSIM_C2)
        den = (mu_a**2 + mu_b**2 + SSIM_C1) * (var_a + var_b + SSIM_C2)
        scores.append(np.mean(num / den))
    return float(np.mean(scores))


@dataclass(frozen=True)
class UciqeReport:
    sigma_c: float
    con_l: float
    mu_s: float

    @property
    def score(self) -> float:
        c1, c2, c3 = UCIQE_COEFFS
        return c1 * self.sigma_c + c2 * self.con_l + c3 * self.mu_s

    def to_dict(self) -> dict:
        return {"sigma_c": self.sigma_c, "con_l": self.con_l, "mu_s": self.mu_s, "score": self.score}


@dataclass(frozen=True)
class UiqmReport:
    uicm: float
    uism: float
    uiconm: float

    @property
    def score(self) -> float:
        c1, c2, c3 = UIQM_COEFFS
        return c1 * self.uicm + c2 * self.uism + c3 * self.uiconm

    def to_dict(self) -> dict:
        return {"uicm": self.uicm, "uism": self.uism, "uiconm": self.uiconm, "score": self.score}


def uciqe(img) -> UciqeReport:
    img = as_image(img)
    lab = rgb2lab(img)
    chroma = np.hypot(lab[:, :, 1], lab[:, :, 2])
    # a constant field has zero spread; np.std can leave rounding residue there
    sigma_c = float(np.std(chroma)) / LAB_CHROMA_MAX if np.ptp(chroma) > 0 else 0.0

    lum = np.sort(lab[:, :, 0], axis=None)
    n = max(1, int(math.floor(LUMA_TAIL * lum.size)))
    con_l = float(np.mean(lum[-n:]) - np.mean(lum[:n])) / 100.0

    mu_s = float(np.mean(rgb2hsv(img)[:, :, 1]))
    return UciqeReport(sigma_c, con_l, mu_s)


def _trimmed_stats(x: np.ndarray, alpha: float):
    s = np.sort(x, axis=None)
    k = int(math.floor(alpha * s.size))
    core = s[k:s.size - k] if s.size - 2 * k > 0 else s
    mu = float(np.mean(core))
    return mu, float(np.mean((core - mu) ** 2))


def _uicm(rgb255: np.ndarray) -> float:
    r, g, b = rgb255[:, :, 0], rgb255[:, :, 1], rgb255[:, :, 2]
    mu_rg, var_rg = _trimmed_stats(r - g, UICM_TRIM)
    mu_yb, var_yb = _trimmed_stats(0.5 * (r + g) - b, UICM_TRIM)
    return -0.0268 * math.hypot(mu_rg, mu_yb) + 0.1586 * math.sqrt(var_rg + var_yb)


def _blocks(x: np.ndarray, size: int):
    """Non-overlapping size x size blocks of the leading two axes (edges trimmed)."""
    h, w = x.shape[:2]
    k1, k2 = max(1, h // size), max(1, w // size)
    bh, bw = (size, size) if h >= size and w >= size else (h, w)
    x = x[:k1 * bh, :k2 * bw]
    shape = (k1, bh, k2, bw) + x.shape[2:]
    return x.reshape(shape).swapaxes(1, 2).reshape((k1, k2, -1)), k1 * k2


def _eme(x: np.ndarray, size: int) -> float:
    blocks, n = _blocks(x, size)
    hi, lo = blocks.max(axis=2), blocks.min(axis=2)
    ok = (hi > 0) & (lo > 0)
    return float(2.0 / n * np.sum(np.log(hi[ok] / lo[ok])))


def _sobel_mag(ch: np.ndarray) -> np.ndarray:
    mag = np.hypot(ndimage.sobel(ch, 0), ndimage.sobel(ch, 1))
    peak = mag.max()
    return mag * (255.0 / peak) if peak > 0 else mag


def _uism(rgb255: np.ndarray) -> float:
    total = 0.0
    for ch, w in enumerate(UISM_CHANNEL_WEIGHTS):
        c = rgb255[:, :, ch]
        total += w * _eme(_sobel_mag(c) * c, UIQM_BLOCK)
    return total


def _uiconm(rgb255: np.ndarray) -> float:
    blocks, n = _blocks(rgb255, UIQM_BLOCK)
    hi, lo = blocks.max(axis=2), blocks.min(axis=2)
    top, bot = hi - lo, hi + lo
    ok = (top > 0) & (bot > 0)
    ratio = top[ok] / bot[ok]
    return float(-np.sum(ratio * np.log(ratio)) / n)


def uiqm(img) -> UiqmReport:
    rgb255 = as_image(img) * 255.0
    return UiqmReport(_uicm(rgb255), _uism(rgb255), _uiconm(rgb255))
