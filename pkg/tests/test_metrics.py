import math

import numpy as np
import pytest

from fgvc.errors import FgvcError, NoBoundaries, TooSmallForScales, ZeroDims
from fgvc.metrics import (RateQualityCurve, bd_metric, bd_rate,
                          boundary_discontinuity, bpp, feasible_scales,
                          mse, ms_ssim, psnr, read_curve_csv, to_luma,
                          write_curve_csv)


# -- bpp ------------------------------------------------------------------------

def test_bpp_arithmetic():
    assert bpp(96, 2, 4, 4) == 3.0
    assert bpp(0, 2, 4, 4) == 0.0
    with pytest.raises(ZeroDims):
        bpp(10, 0, 4, 4)


# -- ms-ssim -----------------------------------------------------------------------

def _naive_ssim_components(a, b, win2d):
    """Windowed SSIM statistics with explicit per-pixel loops."""
    k = win2d.shape[0]
    H, W = a.shape
    lum = np.zeros((H - k + 1, W - k + 1))
    cs = np.zeros_like(lum)
    c1, c2 = 0.01 ** 2, 0.03 ** 2
    for i in range(H - k + 1):
        for j in range(W - k + 1):
            pa = a[i:i + k, j:j + k]
            pb = b[i:i + k, j:j + k]
            mu1 = float((win2d * pa).sum())
            mu2 = float((win2d * pb).sum())
            s11 = float((win2d * pa * pa).sum()) - mu1 * mu1
            s22 = float((win2d * pb * pb).sum()) - mu2 * mu2
            s12 = float((win2d * pa * pb).sum()) - mu1 * mu2
            lum[i, j] = (2 * mu1 * mu2 + c1) / (mu1 * mu1 + mu2 * mu2 + c1)
            cs[i, j] = (2 * s12 + c2) / (s11 + s22 + c2)
    return lum, cs


def _naive_ms_ssim(a, b, scales):
    x = np.arange(11) - 5.0
    w1 = np.exp(-x * x / (2 * 1.5 ** 2))
    w1 /= w1.sum()
    win2d = np.outer(w1, w1)
    weights = np.array([0.0448, 0.2856, 0.3001, 0.2363, 0.1333])[:scales]
    weights = weights / weights.sum()
    value = 1.0
    for level in range(scales):
        lum, cs = _naive_ssim_components(a, b, win2d)
        if level < scales - 1:
            value *= max(cs.mean(), 0.0) ** weights[level]
            h, w = a.shape
            a = a[: h - h % 2, : w - w % 2]
            b = b[: h - h % 2, : w - w % 2]
            a = 0.25 * (a[::2, ::2] + a[1::2, ::2] + a[::2, 1::2] + a[1::2, 1::2])
            b = 0.25 * (b[::2, ::2] + b[1::2, ::2] + b[::2, 1::2] + b[1::2, 1::2])
        else:
            value *= max((lum * cs).mean(), 0.0) ** weights[level]
    return value


def test_ms_ssim_identical_is_one():
    rng = np.random.default_rng(0)
    img = rng.random((48, 48))
    assert ms_ssim(img, img) == pytest.approx(1.0, abs=1e-9)


def test_ms_ssim_negation_ordering():
    rng = np.random.default_rng(1)
    img = 0.5 + 0.2 * (rng.random((48, 48)) - 0.5)
    neg = 1.0 - img
    assert ms_ssim(img, neg) < ms_ssim(img, img)


def test_ms_ssim_matches_naive_reimplementation():
    rng = np.random.default_rng(2)
    a = rng.random((48, 48))
    b = np.clip(a + 0.1 * rng.standard_normal((48, 48)), 0, 1)
    scales = feasible_scales(48, 48, 2)
    assert scales == 2
    fast = ms_ssim(a, b, scales=2)
    slow = _naive_ms_ssim(a, b, scales=2)
    assert fast == pytest.approx(slow, abs=1e-6)


def test_ms_ssim_symmetry():
    rng = np.random.default_rng(3)
    a = rng.random((32, 32))
    b = rng.random((32, 32))
    assert ms_ssim(a, b) == pytest.approx(ms_ssim(b, a), abs=1e-12)


def test_ms_ssim_scale_autoreduction_and_error():
    rng = np.random.default_rng(4)
    a = rng.random((16, 16))
    # only one scale fits; must not raise
    ms_ssim(a, a, scales=5)
    with pytest.raises(TooSmallForScales):
        ms_ssim(np.zeros((8, 8)), np.zeros((8, 8)))


def test_luma_bt601():
    frame = np.zeros((2, 2, 3))
    frame[..., 0] = 1.0
    assert to_luma(frame)[0, 0] == pytest.approx(0.299)
    with pytest.raises(FgvcError):
        to_luma(np.zeros((2, 2, 4)))


def test_mse_psnr():
    a = np.zeros((4, 4))
    b = np.full((4, 4), 0.5)
    assert mse(a, b) == pytest.approx(0.25)
    assert psnr(a, b) == pytest.approx(10 * math.log10(1 / 0.25))
    assert psnr(a, a) == math.inf


# -- BD deltas ------------------------------------------------------------------------

def _dense_trapezoid_bd_rate(anchor, test, n=200_001):
    """Independent integration: same interpolants evaluated on a fine grid."""
    from scipy.interpolate import PchipInterpolator

    xa = np.array([q for _, q in anchor])
    ya = np.log10([r for r, _ in anchor])
    xt = np.array([q for _, q in test])
    yt = np.log10([r for r, _ in test])
    fa = PchipInterpolator(xa, ya)
    ft = PchipInterpolator(xt, yt)
    lo = max(xa.min(), xt.min())
    hi = min(xa.max(), xt.max())
    grid = np.linspace(lo, hi, n)
    avg = np.trapezoid(ft(grid) - fa(grid), grid) / (hi - lo)
    return (10.0 ** avg - 1.0) * 100.0


def _random_monotone_curve(rng, n=5):
    rates = np.sort(rng.uniform(0.01, 2.0, n))
    quals = np.sort(rng.uniform(0.3, 0.99, n))
    # ensure strict monotonicity
    rates += np.arange(n) * 1e-4
    quals += np.arange(n) * 1e-4
    return list(zip(rates, quals))


def test_bd_rate_self_is_zero():
    pts = [(0.1, 0.8), (0.2, 0.9), (0.4, 0.95)]
    res = bd_rate(pts, pts)
    assert res.computable and res.value == 0.0


def test_bd_rate_half_rate_is_minus_fifty():
    pts = [(0.1, 0.8), (0.2, 0.9), (0.4, 0.95)]
    half = [(r / 2, q) for r, q in pts]
    res = bd_rate(pts, half)
    assert res.value == pytest.approx(-50.0, abs=1e-9)


def test_bd_rate_antisymmetric_for_ratio_shift():
    pts = [(0.1, 0.7), (0.25, 0.85), (0.5, 0.93), (1.0, 0.97)]
    shifted = [(r * 1.3, q) for r, q in pts]
    a = bd_rate(pts, shifted).value
    b = bd_rate(shifted, pts).value
    assert a == pytest.approx(30.0, rel=1e-9)
    assert (1 + a / 100) * (1 + b / 100) == pytest.approx(1.0, rel=1e-12)


def test_bd_rate_matches_dense_oracle():
    rng = np.random.default_rng(10)
    for _ in range(25):
        anchor = _random_monotone_curve(rng)
        test = _random_monotone_curve(rng)
        mine = bd_rate(anchor, test)
        if not mine.computable:
            continue
        oracle = _dense_trapezoid_bd_rate(anchor, test)
        assert mine.value == pytest.approx(oracle, abs=abs(oracle) * 1e-3 + 1e-6)


def test_bd_no_overlap_is_na_not_exception():
    a = [(0.1, 0.2), (0.2, 0.3)]
    b = [(0.1, 0.8), (0.2, 0.9)]
    res = bd_rate(a, b)
    assert not res.computable
    assert res.value is None


def test_bd_metric_zero_and_shift():
    pts = [(0.1, 0.8), (0.2, 0.9), (0.4, 0.95)]
    assert bd_metric(pts, pts).value == 0.0
    up = [(r, q + 0.01) for r, q in pts]
    assert bd_metric(pts, up).value == pytest.approx(0.01, rel=1e-9)


def test_curve_csv_roundtrip(tmp_path):
    curve = RateQualityCurve(points=[(0.1, 0.8), (0.2, 0.9)], metric_id="ms_ssim")
    path = tmp_path / "curve.csv"
    write_curve_csv(path, curve)
    back = read_curve_csv(path)
    assert back.metric_id == "ms_ssim"
    assert back.points == curve.points


# -- boundary discontinuity --------------------------------------------------------

def test_boundary_constant_video_is_one():
    video = np.full((10, 4, 4), 0.5)
    assert boundary_discontinuity(video, [5]) == 1.0


def test_boundary_hard_jump():
    video = np.zeros((10, 4, 4))
    video[5:] = 1.0
    video += 0.001 * np.random.default_rng(0).random((10, 4, 4))
    assert boundary_discontinuity(video, [5]) > 100


def test_boundary_requires_boundaries():
    with pytest.raises(NoBoundaries):
        boundary_discontinuity(np.zeros((5, 2, 2)), [])
    with pytest.raises(NoBoundaries):
        boundary_discontinuity(np.zeros((5, 2, 2)), [0])
