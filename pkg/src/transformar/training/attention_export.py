"""Class-token attention maps of the last encoder layer."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from ..autodiff import no_grad
from ..data.images import write_pgm
from ..errors import ShapeError

ENCODER_IMAGES = {"a": "fg", "b": "bg", "s": "sup"}


def class_token_maps(probs: np.ndarray, grid: tuple[int, int]) -> tuple[np.ndarray, np.ndarray]:
    """Last-layer class-token rows reshaped onto the patch grid.

    Parameters
    ----------
    probs : ndarray
        Attention probabilities ``[heads, T, T]`` of one image, T = N + 1.
    grid : tuple of int
        Patch grid ``(H/P, W/P)``.

    Returns
    -------
    maps : ndarray
        ``[heads, H/P, W/P]``, each map renormalised to sum to one over the
        patch tokens (the class token's attention to itself is dropped).
    row_sums : ndarray
        Sum of each full class-token row before dropping, one per head.
    """
    heads, t, _ = probs.shape
    rows, cols = grid
    if t != rows * cols + 1:
        raise ShapeError(f"attention over {t} tokens does not fit a {rows}x{cols} patch grid")
    cls_rows = probs[:, 0, :]
    row_sums = cls_rows.sum(axis=-1)
    patch = cls_rows[:, 1:]
    patch = patch / patch.sum(axis=-1, keepdims=True)
    return patch.reshape(heads, rows, cols), row_sums


def to_gray(m: np.ndarray) -> np.ndarray:
    """Min-max scale to uint8; a constant map becomes mid gray."""
    lo, hi = float(m.min()), float(m.max())
    if hi - lo <= 0:
        return np.full(m.shape, 128, dtype=np.uint8)
    return np.round((m - lo) / (hi - lo) * 255.0).astype(np.uint8)


def export_attention(model, fg: np.ndarray, bg: np.ndarray, sup: np.ndarray, out_dir) -> dict:
    """Write one CSV and one PGM per encoder and head; return the maps by encoder key."""
    ecfg = model.config.encoder
    shape = (ecfg.image_height, ecfg.image_width, 3)
    for name, img in (("fg", fg), ("bg", bg), ("sup", sup)):
        if np.shape(img) != shape:
            raise ShapeError(f"{name} image has shape {np.shape(img)}, model expects {shape}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with no_grad():
        result = model.forward(fg[None], bg[None], sup[None], return_attention=True)
    maps = {}
    for key in ENCODER_IMAGES:
        probs = result.attention[f"encoder_{key}"][-1][0]
        head_maps, _ = class_token_maps(probs, ecfg.grid)
        maps[key] = head_maps
        for h, m in enumerate(head_maps):
            stem = out / f"encoder_{key}_head{h}"
            np.savetxt(stem.with_suffix(".csv"), m, delimiter=",", fmt="%.17g")
            write_pgm(stem.with_suffix(".pgm"), to_gray(m))
    return maps
