"""Rate and quality measurement.

Includes bits-per-pixel accounting, PSNR/MSE, multi-scale structural
similarity on luma, Bjontegaard rate/metric deltas over monotone
piecewise-cubic interpolation, and a boundary-discontinuity ratio used by the
inter-group alignment ablation. All functions are pure.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.ndimage import convolve1d

from .errors import FgvcError, NoBoundaries, TooSmallForScales, ZeroDims

# canonical multi-scale weights (Wang et al. defaults)
_MS_WEIGHTS = np.array([0.0448, 0.2856, 0.3001, 0.2363, 0.1333])
_WIN = 11
_SIGMA = 1.5
_K1, _K2 = 0.01, 0.03


def bpp(total_bits: float, n_frames: int, height: int, width: int) -> float:
    """Bits per pixel over n_frames * height * width."""
    if n_frames <= 0 or height <= 0 or width <= 0:
        raise ZeroDims(f"bad pixel volume {n_frames}x{height}x{width}")
    return total_bits / (n_frames * height * width)


def mse(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    if a.shape != b.shape:
        raise FgvcError(f"shape {a.shape} vs {b.shape}")
    return float(np.mean((a - b) ** 2))


def psnr(a: np.ndarray, b: np.ndarray, peak: float = 1.0) -> float:
    err = mse(a, b)
    if err == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / err)


def to_luma(frame: np.ndarray) -> np.ndarray:
    """BT.601 luma for color frames; identity for 2-D input."""
    frame = np.asarray(frame, float)
    if frame.ndim == 2:
        return frame
    if frame.ndim == 3 and frame.shape[2] == 3:
        return frame @ np.array([0.299, 0.587, 0.114])
    raise FgvcError(f"expected HxW or HxWx3 frame, got {frame.shape}")


def _gaussian_window(size: int = _WIN, sigma: float = _SIGMA) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2.0
    w = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return w / w.sum()


def _filter_valid(img: np.ndarray, win: np.ndarray) -> np.ndarray:
    half = win.size // 2
    out = convolve1d(img, win, axis=0, mode="constant")
    out = convolve1d(out, win, axis=1, mode="constant")
    return out[half:-half, half:-half]


def _ssim_components(a: np.ndarray, b: np.ndarray, win: np.ndarray):
    c1 = (_K1 * 1.0) ** 2
    c2 = (_K2 * 1.0) ** 2
    mu1 = _filter_valid(a, win)
    mu2 = _filter_valid(b, win)
    s11 = _filter_valid(a * a, win) - mu1 * mu1
    s22 = _filter_valid(b * b, win) - mu2 * mu2
    s12 = _filter_valid(a * b, win) - mu1 * mu2
    lum = (2.0 * mu1 * mu2 + c1) / (mu1 * mu1 + mu2 * mu2 + c1)
    cs = (2.0 * s12 + c2) / (s11 + s22 + c2)
    return lum, cs


def _downsample2(img: np.ndarray) -> np.ndarray:
    h, w = img.shape
    img = img[: h - h % 2, : w - w % 2]
    return 0.25 * (img[0::2, 0::2] + img[1::2, 0::2] + img[0::2, 1::2] + img[1::2, 1::2])


def feasible_scales(height: int, width: int, requested: int = 5) -> int:
    """Largest scale count the frame supports (window must fit at every scale)."""
    n = 0
    m = min(height, width)
    while n < requested and m >= _WIN:
        n += 1
        m //= 2
    return n


def ms_ssim(a: np.ndarray, b: np.ndarray, scales: int = 5) -> float:
    """Multi-scale structural similarity on luma, samples in [0, 1].

    The scale count is reduced automatically when the frame is too small for
    the requested number (weights renormalised); a frame smaller than the
    11-tap window at full resolution raises TooSmallForScales.
    """
    a = to_luma(a)
    b = to_luma(b)
    if a.shape != b.shape:
        raise FgvcError(f"frame shapes differ: {a.shape} vs {b.shape}")
    use = feasible_scales(a.shape[0], a.shape[1], scales)
    if use < 1:
        raise TooSmallForScales(
            f"frame {a.shape} smaller than the {_WIN}x{_WIN} window")
    weights = _MS_WEIGHTS[:use]
    weights = weights / weights.sum()
    win = _gaussian_window()

    value = 1.0
    for level in range(use):
        lum, cs = _ssim_components(a, b, win)
        if level < use - 1:
            value *= max(float(np.mean(cs)), 0.0) ** weights[level]
            a = _downsample2(a)
            b = _downsample2(b)
        else:
            value *= max(float(np.mean(lum * cs)), 0.0) ** weights[level]
    return float(value)


def ms_ssim_video(a: np.ndarray, b: np.ndarray, scales: int = 5) -> float:
    """Mean frame-wise MS-SSIM over two aligned videos."""
    if a.shape != b.shape:
        raise FgvcError(f"video shapes differ: {a.shape} vs {b.shape}")
    return float(np.mean([ms_ssim(a[i], b[i], scales) for i in range(a.shape[0])]))


# -- Bjontegaard deltas ---------------------------------------------------------

@dataclass
class RateQualityCurve:
    points: list[tuple[float, float]]  # (bpp, metric)
    metric_id: str = "quality"

    def sorted_points(self) -> list[tuple[float, float]]:
        return sorted(self.points)


@dataclass
class BdResult:
    value: float | None
    computable: bool
    reason: str = ""

    def __format__(self, spec):
        return format(self.value, spec) if self.computable else "N/A"


def _curve_arrays(curve, by_metric: bool):
    pts = curve.sorted_points() if isinstance(curve, RateQualityCurve) else sorted(curve)
    if len(pts) < 2:
        raise FgvcError(f"BD needs at least 2 points, got {len(pts)}")
    rates = np.array([p[0] for p in pts], float)
    quals = np.array([p[1] for p in pts], float)
    if (rates <= 0).any():
        raise FgvcError("BD requires strictly positive rates")
    if by_metric:
        order = np.argsort(quals)
        x, y = quals[order], np.log10(rates[order])
    else:
        order = np.argsort(rates)
        x, y = np.log10(rates[order]), quals[order]
    if (np.diff(x) <= 0).any():
        raise FgvcError("curve is not strictly monotone; BD interpolation undefined")
    return x, y


def bd_rate(anchor, test) -> BdResult:
    """Average rate difference (%) over the overlapping quality interval.

    Negative values are bitrate savings of ``test`` against ``anchor``. When
    the quality ranges do not overlap the result is an explicit N/A, not an
    exception.
    """
    xa, ya = _curve_arrays(anchor, by_metric=True)
    xt, yt = _curve_arrays(test, by_metric=True)
    lo = max(xa.min(), xt.min())
    hi = min(xa.max(), xt.max())
    if not hi > lo:
        return BdResult(None, False, "no overlap between quality ranges")
    fa = PchipInterpolator(xa, ya)
    ft = PchipInterpolator(xt, yt)
    avg_diff = (ft.integrate(lo, hi) - fa.integrate(lo, hi)) / (hi - lo)
    return BdResult((10.0 ** avg_diff - 1.0) * 100.0, True)


def bd_metric(anchor, test) -> BdResult:
    """Average metric difference over the overlapping log-rate interval."""
    xa, ya = _curve_arrays(anchor, by_metric=False)
    xt, yt = _curve_arrays(test, by_metric=False)
    lo = max(xa.min(), xt.min())
    hi = min(xa.max(), xt.max())
    if not hi > lo:
        return BdResult(None, False, "no overlap between rate ranges")
    fa = PchipInterpolator(xa, ya)
    ft = PchipInterpolator(xt, yt)
    return BdResult(float((ft.integrate(lo, hi) - fa.integrate(lo, hi)) / (hi - lo)), True)


NA_SENTINEL = "NA"


def write_curve_csv(path, curve: RateQualityCurve) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["bpp", curve.metric_id])
        for r, q in curve.sorted_points():
            w.writerow([f"{r:.10g}", f"{q:.10g}"])


def read_curve_csv(path) -> RateQualityCurve:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise FgvcError(f"{path}: empty curve file")
    metric_id = rows[0][1] if len(rows[0]) > 1 else "quality"
    pts = []
    for row in rows[1:]:
        if not row or row[0] == NA_SENTINEL:
            continue
        pts.append((float(row[0]), float(row[1])))
    return RateQualityCurve(points=pts, metric_id=metric_id)


# -- boundary discontinuity -------------------------------------------------------

def boundary_discontinuity(video: np.ndarray, boundaries) -> float:
    """Mean absolute inter-frame difference at boundary frame pairs divided by
    the mean over interior pairs. 1.0 means no boundary excess; a temporally
    constant video returns 1.0 by convention.
    """
    video = np.asarray(video, float)
    bset = sorted(set(int(b) for b in boundaries))
    if not bset:
        raise NoBoundaries("need at least one boundary frame index")
    L = video.shape[0]
    for b in bset:
        if not 1 <= b <= L - 1:
            raise NoBoundaries(f"boundary {b} outside (0, {L})")
    diffs = np.array([np.mean(np.abs(video[i] - video[i - 1])) for i in range(1, L)])
    mask = np.zeros(L - 1, dtype=bool)
    for b in bset:
        mask[b - 1] = True
    bmean = float(diffs[mask].mean())
    interior = diffs[~mask]
    imean = float(interior.mean()) if interior.size else 0.0
    if imean == 0.0:
        return 1.0 if bmean == 0.0 else math.inf
    return bmean / imean
