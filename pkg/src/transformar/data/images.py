"""Binary PPM/PGM I/O and bilinear resampling."""

from __future__ import annotations

import re
from pathlib import Path

import numpy as np

from ..errors import DataError, ImageFormatError, ShapeError

_HEADER = re.compile(rb"\A(P[56])\s+(?:#[^\n]*\s+)*(\d+)\s+(?:#[^\n]*\s+)*(\d+)\s+(?:#[^\n]*\s+)*(\d+)\s")


def encode_pnm(pixels: np.ndarray) -> bytes:
    """uint8 ``H x W x 3`` -> P6 bytes, ``H x W`` -> P5 bytes."""
    pixels = np.asarray(pixels)
    if pixels.dtype != np.uint8:
        raise ImageFormatError(f"PNM payload must be uint8, got {pixels.dtype}")
    if pixels.ndim == 3 and pixels.shape[2] == 3:
        magic = b"P6"
    elif pixels.ndim == 2:
        magic = b"P5"
    else:
        raise ImageFormatError(f"cannot store array of shape {pixels.shape} as PNM")
    h, w = pixels.shape[:2]
    return magic + f"\n{w} {h}\n255\n".encode("ascii") + np.ascontiguousarray(pixels).tobytes()


def decode_pnm(blob: bytes, source: str = "<bytes>") -> np.ndarray:
    m = _HEADER.match(blob)
    if m is None:
        raise ImageFormatError(f"{source}: not a binary PPM/PGM image")
    magic, w, h, maxval = m.group(1), int(m.group(2)), int(m.group(3)), int(m.group(4))
    if maxval != 255:
        raise ImageFormatError(f"{source}: only maxval 255 is supported, got {maxval}")
    channels = 3 if magic == b"P6" else 1
    payload = blob[m.end():]
    need = w * h * channels
    if len(payload) < need:
        raise ImageFormatError(f"{source}: pixel data truncated ({len(payload)} of {need} bytes)")
    arr = np.frombuffer(payload[:need], dtype=np.uint8)
    return arr.reshape((h, w, 3) if channels == 3 else (h, w)).copy()


def to_uint8(image: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(np.asarray(image) * 255.0), 0, 255).astype(np.uint8)


def read_ppm(path) -> np.ndarray:
    """Read a P6 file as a float64 ``H x W x 3`` array in [0, 1]."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"image file not found: {path}")
    pixels = decode_pnm(path.read_bytes(), str(path))
    if pixels.ndim != 3:
        raise ImageFormatError(f"{path}: expected a colour (P6) image")
    return pixels.astype(np.float64) / 255.0


def write_ppm(path, image: np.ndarray) -> None:
    """Write a float image in [0, 1] (or uint8 pixels) as P6."""
    image = np.asarray(image)
    pixels = image if image.dtype == np.uint8 else to_uint8(image)
    Path(path).write_bytes(encode_pnm(pixels))


def write_pgm(path, gray: np.ndarray) -> None:
    gray = np.asarray(gray)
    pixels = gray if gray.dtype == np.uint8 else to_uint8(gray)
    Path(path).write_bytes(encode_pnm(pixels))


def resize_bilinear(image: np.ndarray, height: int, width: int) -> np.ndarray:
    """Bilinear resampling with half-pixel centres and edge clamping."""
    image = np.asarray(image, dtype=np.float64)
    h, w = image.shape[:2]
    if height <= 0 or width <= 0:
        raise ShapeError(f"cannot resize to {height}x{width}")
    if (h, w) == (height, width):
        return image.copy()

    def coords(n_out, n_in):
        src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
        src = np.clip(src, 0, n_in - 1)
        lo = np.floor(src).astype(int)
        hi = np.minimum(lo + 1, n_in - 1)
        return lo, hi, src - lo

    y0, y1, fy = coords(height, h)
    x0, x1, fx = coords(width, w)
    fy = fy.reshape((-1, 1) + (1,) * (image.ndim - 2))
    fx = fx.reshape((1, -1) + (1,) * (image.ndim - 2))
    top = image[y0][:, x0] * (1 - fx) + image[y0][:, x1] * fx
    bottom = image[y1][:, x0] * (1 - fx) + image[y1][:, x1] * fx
    return top * (1 - fy) + bottom * fy


def luma(image: np.ndarray) -> np.ndarray:
    """Rec.601 luma of an ``H x W x 3`` image."""
    image = np.asarray(image, dtype=np.float64)
    return image[..., 0] * 0.299 + image[..., 1] * 0.587 + image[..., 2] * 0.114
