import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aquaforge.core import DataError
from aquaforge.metrics import (
    LAB_CHROMA_MAX,
    UciqeReport,
    UiqmReport,
    mse,
    psnr,
    ssim,
    uciqe,
    uiqm,
)
from oracles import ssim_loops


def const(v, shape=(8, 8)):
    return np.full(shape + (3,), float(v))


def test_mse_examples(rng):
    a = rng.random((4, 4, 3))
    assert mse(a, a) == 0.0
    assert mse(const(0.0), const(0.1)) == pytest.approx(0.01, abs=1e-15)
    b = rng.random((4, 4, 3))
    assert mse(a, b) == mse(b, a)


def test_mse_shape_mismatch():
    with pytest.raises(DataError):
        mse(const(0, (4, 4)), const(0, (4, 5)))


def test_psnr_examples():
    assert psnr(const(0.0), const(0.1)) == pytest.approx(20.0, abs=1e-9)
    assert psnr(const(0.3), const(0.3)) == math.inf
    assert psnr(const(0.0), const(1.0)) == pytest.approx(0.0, abs=1e-12)


@settings(max_examples=30)
@given(st.floats(0.001, 0.49), st.floats(0.001, 0.49))
def test_psnr_strictly_decreasing_in_mse(x, y):
    if x == y:
        return
    lo, hi = sorted((x, y))
    assert psnr(const(0.0), const(lo)) > psnr(const(0.0), const(hi))


def test_ssim_identical_is_one(rng):
    a = rng.random((12, 10, 3))
    assert ssim(a, a) == pytest.approx(1.0, abs=1e-12)


def test_ssim_mid_gray_against_its_complement():
    a = const(0.5)
    assert ssim(a, 1.0 - a) == pytest.approx(1.0, abs=1e-12)


def test_ssim_noise_matches_loop_oracle():
    g = np.random.default_rng(0)
    a, b = g.random((2, 64, 64, 3))
    fast = ssim(a, b)
    assert fast < 0.9
    small_a, small_b = a[:12, :14], b[:12, :14]
    assert ssim(small_a, small_b) == pytest.approx(ssim_loops(small_a, small_b), abs=1e-12)


def test_ssim_structured_pair_matches_loop_oracle():
    g = np.random.default_rng(1)
    a = g.random((10, 11, 3))
    b = np.clip(a + 0.05 * g.standard_normal(a.shape), 0, 1)
    assert ssim(a, b) == pytest.approx(ssim_loops(a, b), abs=1e-12)


def test_ssim_too_small():
    with pytest.raises(DataError):
        ssim(const(0, (7, 9)), const(0, (7, 9)))


def test_uciqe_linear_in_components():
    assert UciqeReport(1, 1, 1).score == pytest.approx(1.0, abs=1e-9)
    assert UciqeReport(0.5, 0.8, 0.3).score == pytest.approx(0.53085, abs=1e-12)
    assert UciqeReport(0, 0, 0).score == 0.0


def test_uiqm_linear_in_components():
    assert UiqmReport(1, 1, 1).score == pytest.approx(3.8988, abs=1e-9)
    assert UiqmReport(0, 0, 0).score == 0.0


def test_uciqe_uniform_gray_is_zero():
    r = uciqe(const(0.5, (16, 16)))
    assert (r.sigma_c, r.con_l, r.mu_s) == (0.0, 0.0, 0.0)
    assert r.score == 0.0


def test_uiqm_uniform_image_has_no_sharpness_or_contrast():
    r = uiqm(const(0.4, (16, 16)))
    assert r.uism == 0.0
    assert r.uiconm == 0.0


def test_uiqm_uniform_gray_is_zero():
    assert uiqm(const(0.5, (16, 16))).score == 0.0


def test_uciqe_components_in_expected_ranges(rng):
    r = uciqe(rng.random((32, 32, 3)))
    assert 0 < r.sigma_c < 1 and 0 < r.con_l <= 1 and 0 < r.mu_s <= 1


def test_uciqe_pure_blue_chroma_constant():
    img = np.zeros((4, 4, 3))
    img[:2, :, 2] = 1.0
    # half pure blue, half black: chroma is {133.8, 0}, population std is half the max
    assert uciqe(img).sigma_c == pytest.approx(0.5 * 133.80416666129122 / LAB_CHROMA_MAX, rel=1e-6)


def test_uiconm_grows_with_contrast_in_low_contrast_regime():
    # -m log m rises until m = 1/e, so compare block contrasts below that
    g = np.random.default_rng(2)
    base = g.random((32, 32, 3)) - 0.5
    assert uiqm(0.5 + 0.2 * base).uiconm > uiqm(0.5 + 0.05 * base).uiconm > 0


def test_uicm_grey_vs_colorful():
    g = np.random.default_rng(3)
    colorful = g.random((32, 32, 3))
    grey = np.repeat(colorful.mean(axis=2, keepdims=True), 3, axis=2)
    assert uiqm(colorful).uicm > uiqm(grey).uicm


def test_reports_deterministic(rng):
    img = rng.random((24, 24, 3))
    assert uciqe(img) == uciqe(img.copy())
    assert uiqm(img) == uiqm(img.copy())
