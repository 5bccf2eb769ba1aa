"""Classical distortions and the foreground/background superimposition."""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError, ShapeError
from .images import resize_bilinear

DISTORTION_KINDS = ("jpeg_proxy", "scale", "contrast", "none")

# ITU-T T.81 Annex K luminance table
LUMINANCE_TABLE = np.array([
    [16, 11, 10, 16, 24, 40, 51, 61],
    [12, 12, 14, 19, 26, 58, 60, 55],
    [14, 13, 16, 24, 40, 57, 69, 56],
    [14, 17, 22, 29, 51, 87, 80, 62],
    [18, 22, 37, 56, 68, 109, 103, 77],
    [24, 35, 55, 64, 81, 104, 113, 92],
    [49, 64, 78, 87, 103, 121, 120, 101],
    [72, 92, 95, 98, 112, 100, 103, 99],
], dtype=np.float64)


def dct_matrix(n: int = 8) -> np.ndarray:
    """Orthonormal DCT-II basis; row k is frequency k."""
    k = np.arange(n)[:, None]
    x = np.arange(n)[None, :]
    m = np.sqrt(2.0 / n) * np.cos(np.pi * (2 * x + 1) * k / (2 * n))
    m[0] /= np.sqrt(2.0)
    return m


_DCT8 = dct_matrix(8)


def quality_table(quality: float) -> np.ndarray:
    """Luminance table scaled by the IJG quality convention."""
    if not 1 <= quality <= 100:
        raise ConfigError(f"jpeg_proxy quality must lie in [1, 100], got {quality}")
    scale = 5000.0 / quality if quality < 50 else 200.0 - 2.0 * quality
    return np.clip(np.floor((LUMINANCE_TABLE * scale + 50.0) / 100.0), 1, 255)


def jpeg_proxy(image: np.ndarray, quality: float) -> np.ndarray:
    """8x8 block DCT, table quantisation and inverse DCT on each channel."""
    table = quality_table(quality)
    image = np.asarray(image, dtype=np.float64)
    h, w = image.shape[:2]
    ph, pw = -h % 8, -w % 8
    padded = np.pad(image, ((0, ph), (0, pw), (0, 0)), mode="edge") * 255.0 - 128.0
    hh, ww = padded.shape[:2]
    # [rows, 8, cols, 8, ch] -> [rows, cols, ch, 8, 8]
    blocks = padded.reshape(hh // 8, 8, ww // 8, 8, -1).transpose(0, 2, 4, 1, 3)
    coeffs = _DCT8 @ blocks @ _DCT8.T
    coeffs = np.round(coeffs / table) * table
    restored = _DCT8.T @ coeffs @ _DCT8
    out = restored.transpose(0, 3, 1, 4, 2).reshape(hh, ww, -1)
    return np.clip((out[:h, :w] + 128.0) / 255.0, 0.0, 1.0)


def rescale(image: np.ndarray, factor: float) -> np.ndarray:
    if not 0 < factor <= 1:
        raise ConfigError(f"scale factor must lie in (0, 1], got {factor}")
    if factor == 1:
        return np.array(image, dtype=np.float64)
    h, w = image.shape[:2]
    small = resize_bilinear(image, max(1, round(h * factor)), max(1, round(w * factor)))
    return resize_bilinear(small, h, w)


def adjust_contrast(image: np.ndarray, factor: float) -> np.ndarray:
    if not 0 < factor <= 2:
        raise ConfigError(f"contrast factor must lie in (0, 2], got {factor}")
    image = np.asarray(image, dtype=np.float64)
    if factor == 1:
        return image.copy()
    m = image.mean(axis=(0, 1), keepdims=True)
    return np.clip(m + factor * (image - m), 0.0, 1.0)


def apply_distortion(image: np.ndarray, kind: str, level: float) -> np.ndarray:
    if kind == "jpeg_proxy":
        return jpeg_proxy(image, level)
    if kind == "scale":
        return rescale(image, level)
    if kind == "contrast":
        return adjust_contrast(image, level)
    if kind == "none":
        return np.array(image, dtype=np.float64)
    raise ConfigError(f"unknown distortion kind {kind!r}; expected one of {DISTORTION_KINDS}")


def superimpose(fg: np.ndarray, bg: np.ndarray, sigma: float, distortion=("none", 0.0)) -> np.ndarray:
    """sigma * D(fg) + (1 - sigma) * bg, clamped to [0, 1]."""
    fg = np.asarray(fg, dtype=np.float64)
    bg = np.asarray(bg, dtype=np.float64)
    if fg.shape != bg.shape:
        raise ShapeError(f"superimpose: foreground {fg.shape} and background {bg.shape} differ")
    if not 0 < sigma < 1:
        raise ConfigError(f"sigma must lie in (0, 1), got {sigma}")
    kind, level = distortion
    return np.clip(sigma * apply_distortion(fg, kind, level) + (1 - sigma) * bg, 0.0, 1.0)
