"""PSNR and SSIM baselines."""

from __future__ import annotations

import numpy as np

from ..data.images import luma
from ..errors import ShapeError


def psnr(a, b, maxval: float = 1.0) -> float:
    """10 log10(max^2 / MSE); identical images give +inf."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"psnr: shapes {a.shape} and {b.shape} differ")
    err = np.mean((a - b) ** 2)
    if err == 0.0:
        return float("inf")
    return float(10.0 * np.log10(maxval**2 / err))


def gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    t = np.arange(size) - (size - 1) / 2
    g = np.exp(-0.5 * (t / sigma) ** 2)
    return g / g.sum()


def _filter_valid(x: np.ndarray, g: np.ndarray) -> np.ndarray:
    k = g.size
    h, w = x.shape
    rows = sum(g[i] * x[:, i:w - k + 1 + i] for i in range(k))
    return sum(g[i] * rows[i:h - k + 1 + i, :] for i in range(k))


def ssim_map(a, b, data_range: float = 1.0, k1: float = 0.01, k2: float = 0.03,
             win_size: int = 11, sigma: float = 1.5) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"ssim: shapes {a.shape} and {b.shape} differ")
    if a.ndim == 3:
        a, b = luma(a), luma(b)
    if min(a.shape) < win_size:
        raise ShapeError(f"ssim: image {a.shape} smaller than the {win_size}x{win_size} window")
    g = gaussian_window(win_size, sigma)
    c1, c2 = (k1 * data_range) ** 2, (k2 * data_range) ** 2
    mu_a, mu_b = _filter_valid(a, g), _filter_valid(b, g)
    var_a = _filter_valid(a * a, g) - mu_a**2
    var_b = _filter_valid(b * b, g) - mu_b**2
    cov = _filter_valid(a * b, g) - mu_a * mu_b
    return ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / ((mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2))


def ssim(a, b, data_range: float = 1.0) -> float:
    """Mean SSIM on Rec.601 luma with an 11x11 Gaussian window (sigma 1.5)."""
    return float(ssim_map(a, b, data_range).mean())
