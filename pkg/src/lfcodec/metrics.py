"""Quality and rate metrics: PSNR, SSIM, Bjontegaard deltas, similarity maps."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import DegenerateFit, DimensionMismatch, NoOverlap, TooSmall

PSNR_CAP = 100.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def _pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatch(f"shapes differ: {a.shape} vs {b.shape}")
    return a, b


def mse(a, b):
    a, b = _pair(a, b)
    return float(np.mean((a - b) ** 2))


def psnr(a, b, bit_depth=8):
    """PSNR in dB with peak ``2**bit_depth - 1``; identical inputs give the 100 dB cap."""
    m = mse(a, b)
    if m == 0:
        return PSNR_CAP
    peak = float((1 << bit_depth) - 1)
    return min(PSNR_CAP, 10.0 * math.log10(peak * peak / m))


def _gaussian_window():
    # truncate so the kernel is exactly 11 taps wide
    return dict(sigma=SSIM_SIGMA, truncate=(SSIM_WINDOW // 2) / SSIM_SIGMA)


def ssim_y(a, b, bit_depth=8):
    """Mean SSIM over the valid region, 11x11 Gaussian window (sigma 1.5)."""
    a, b = _pair(a, b)
    if a.ndim != 2 or min(a.shape) < SSIM_WINDOW:
        raise TooSmall(f"SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW} samples, got {a.shape}")
    peak = float((1 << bit_depth) - 1)
    c1 = (SSIM_K1 * peak) ** 2
    c2 = (SSIM_K2 * peak) ** 2
    win = _gaussian_window()

    def f(x):
        return ndimage.gaussian_filter(x, **win)

    mu_a, mu_b = f(a), f(b)
    # unbiased local (co)variances, as in the usual reference implementation
    n = SSIM_WINDOW * SSIM_WINDOW
    cov_norm = n / (n - 1.0)
    var_a = cov_norm * (f(a * a) - mu_a * mu_a)
    var_b = cov_norm * (f(b * b) - mu_b * mu_b)
    cov = cov_norm * (f(a * b) - mu_a * mu_b)
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    s = num / den
    pad = SSIM_WINDOW // 2
    return float(s[pad:-pad, pad:-pad].mean())


@dataclass(frozen=True)
class RdPoint:
    bpp: float
    psnr_y: float
    ssim_y: float = float("nan")


@dataclass(frozen=True)
class RateDistortionCurve:
    points: tuple

    def __post_init__(self):
        object.__setattr__(self, "points", tuple(sorted(self.points, key=lambda p: p.bpp)))

    @classmethod
    def from_pairs(cls, rates, psnrs):
        return cls(tuple(RdPoint(float(r), float(q)) for r, q in zip(rates, psnrs)))

    @property
    def rates(self):
        return np.array([p.bpp for p in self.points])

    @property
    def psnrs(self):
        return np.array([p.psnr_y for p in self.points])

    def to_csv_rows(self):
        return [(f"{p.bpp:.6f}", f"{p.psnr_y:.4f}", f"{p.ssim_y:.6f}") for p in self.points]


def _check_curve(rates, quality):
    if len(rates) < 4:
        raise DegenerateFit(f"Bjontegaard fit needs at least 4 points, got {len(rates)}")
    if np.any(rates <= 0):
        raise DegenerateFit("rates must be positive")
    if len(np.unique(rates)) != len(rates):
        raise DegenerateFit("duplicate rates")
    if len(np.unique(quality)) != len(quality):
        raise DegenerateFit("duplicate quality values")


def _integral(coefs, lo, hi):
    p = np.polyint(coefs)
    return np.polyval(p, hi) - np.polyval(p, lo)


def bd_psnr(test, anchor):
    """Average PSNR difference (test - anchor) over the shared log-rate interval."""
    lr_t, lr_a = np.log10(test.rates), np.log10(anchor.rates)
    _check_curve(test.rates, test.psnrs)
    _check_curve(anchor.rates, anchor.psnrs)
    lo = max(lr_t.min(), lr_a.min())
    hi = min(lr_t.max(), lr_a.max())
    if not hi > lo:
        raise NoOverlap("rate intervals do not overlap")
    pt = np.polyfit(lr_t, test.psnrs, 3)
    pa = np.polyfit(lr_a, anchor.psnrs, 3)
    return float((_integral(pt, lo, hi) - _integral(pa, lo, hi)) / (hi - lo))


def bd_rate(test, anchor):
    """Average bitrate difference of test vs anchor in percent at equal PSNR."""
    lr_t, lr_a = np.log10(test.rates), np.log10(anchor.rates)
    _check_curve(test.rates, test.psnrs)
    _check_curve(anchor.rates, anchor.psnrs)
    lo = max(test.psnrs.min(), anchor.psnrs.min())
    hi = min(test.psnrs.max(), anchor.psnrs.max())
    if not hi > lo:
        raise NoOverlap("PSNR intervals do not overlap")
    pt = np.polyfit(test.psnrs, lr_t, 3)
    pa = np.polyfit(anchor.psnrs, lr_a, 3)
    avg = (_integral(pt, lo, hi) - _integral(pa, lo, hi)) / (hi - lo)
    return float((10.0 ** avg - 1.0) * 100.0)


def bd_metrics(test, anchor):
    return {"bd_rate_pct": bd_rate(test, anchor), "bd_psnr_db": bd_psnr(test, anchor)}


def grid_quality(reference, decoded):
    """Mean Y-PSNR and Y-SSIM over all views of two grids."""
    ps, ss = [], []
    for a, b in zip(reference.views, decoded.views):
        ps.append(psnr(a.y, b.y, reference.bit_depth))
        ss.append(ssim_y(a.y, b.y, reference.bit_depth) if min(a.y.shape) >= SSIM_WINDOW
                  else float("nan"))
    return float(np.mean(ps)), float(np.mean(ss))


def similarity_map(grid):
    """Per view, the mean Y-PSNR against every other view of the grid."""
    n = grid.num_views
    if n < 2:
        raise DimensionMismatch("a similarity map needs at least two views")
    table = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            table[i, j] = table[j, i] = psnr(grid.views[i].y, grid.views[j].y, grid.bit_depth)
    means = table.sum(axis=1) / (n - 1)
    return means.reshape(grid.rows, grid.cols)


def similarity_csv_rows(smap):
    rows, cols = smap.shape
    return [(r, c, f"{smap[r, c]:.4f}") for r in range(rows) for c in range(cols)]
