"""Procedural AR scenes with a planted, monotone quality ground truth.

Subjective scores cannot be reproduced, so the generator assigns

    mos = 10 * (1 - 0.8 * severity) * sqrt(sigma)

where ``severity`` in [0, 1] grows with the distortion strength:
``0.5 * (100 - quality) / 99`` for jpeg_proxy, ``min(1, 1.2 * (1 - factor))``
for scale, ``min(1, 1.6 * |1 - factor|)`` for contrast and 0 for none. The
per-kind slopes roughly equalise the mean absolute pixel change that equal
severities cause on the procedural sources, so one severity scale is
meaningful across kinds. The score rises with the mixing value, falls with
severity and does not depend on content.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import ConfigError, DataError
from ..heads import AR_CLASSES, BACKGROUND_CLASSES
from .images import read_ppm, resize_bilinear, write_ppm
from .distortions import superimpose
from .manifest import STANDARD_SIGMAS, SceneTriplet, write_manifest

DEFAULT_GRIDS = {
    "jpeg_proxy": (10.0, 30.0),
    "scale": (0.25, 0.5),
    "contrast": (0.4, 1.6),
}


def severity(kind: str, level: float) -> float:
    if kind == "none":
        return 0.0
    if kind == "jpeg_proxy":
        return 0.5 * (100.0 - level) / 99.0
    if kind == "scale":
        return min(1.0, 1.2 * (1.0 - level))
    if kind == "contrast":
        return min(1.0, 1.6 * abs(1.0 - level))
    raise ConfigError(f"unknown distortion kind {kind!r}")


def planted_mos(kind: str, level: float, sigma: float) -> float:
    return 10.0 * (1.0 - 0.8 * severity(kind, level)) * float(np.sqrt(sigma))


# procedural sources -----------------------------------------------------------


def _blur(x: np.ndarray, radius: int) -> np.ndarray:
    if radius <= 0:
        return x
    t = np.arange(-2 * radius, 2 * radius + 1)
    k = np.exp(-0.5 * (t / radius) ** 2)
    k /= k.sum()
    pad = 2 * radius
    for axis in (0, 1):
        widths = [(0, 0)] * x.ndim
        widths[axis] = (pad, pad)
        xp = np.pad(x, widths, mode="reflect")
        x = np.apply_along_axis(lambda v: np.convolve(v, k, mode="valid"), axis, xp)
    return x


def _canvas(size: int, color) -> np.ndarray:
    return np.broadcast_to(np.asarray(color, dtype=np.float64), (size, size, 3)).copy()


def _web(rng, n):
    img = _canvas(n, rng.uniform(0.85, 1.0, 3))
    img[: n // 8] = rng.uniform(0.1, 0.6, 3)
    y = n // 8 + 3
    while y < n - 4:
        length = rng.integers(n // 3, n - 6)
        img[y:y + 2, 4:4 + length] = rng.uniform(0.0, 0.25)
        y += rng.integers(4, 7)
    for _ in range(2):
        y0, x0 = rng.integers(n // 4, n - n // 4, 2)
        img[y0:y0 + n // 6, x0:x0 + n // 5] = rng.uniform(0.2, 0.9, 3)
    return img


def _natural(rng, n):
    base = _blur(rng.standard_normal((n, n, 3)), max(1, n // 12))
    base = (base - base.min()) / (np.ptp(base) + 1e-12)
    detail = _blur(rng.standard_normal((n, n, 1)), 1) * 0.08
    tint = rng.uniform(0.5, 1.0, 3)
    return np.clip(base * tint + detail + 0.05, 0.0, 1.0)


def _graphics(rng, n):
    img = _canvas(n, rng.uniform(0.0, 1.0, 3))
    yy, xx = np.mgrid[0:n, 0:n]
    for _ in range(rng.integers(3, 6)):
        color = rng.uniform(0.0, 1.0, 3)
        cy, cx = rng.uniform(0, n, 2)
        r = rng.uniform(n / 10, n / 4)
        if rng.random() < 0.5:
            mask = (yy - cy) ** 2 + (xx - cx) ** 2 < r * r
        else:
            mask = (np.abs(yy - cy) < r) & (np.abs(xx - cx) < r * 0.7)
        img[mask] = color
    return img


def _indoor(rng, n):
    wall = rng.uniform(0.35, 0.75, 3) * np.array([1.0, 0.9, 0.75])
    img = _canvas(n, wall) * np.linspace(0.8, 1.1, n)[None, :, None]
    floor = int(n * rng.uniform(0.6, 0.8))
    img[floor:] = rng.uniform(0.2, 0.45, 3)
    for _ in range(rng.integers(2, 4)):
        h, w = rng.integers(n // 8, n // 3, 2)
        y0, x0 = rng.integers(0, n - h), rng.integers(0, n - w)
        img[y0:y0 + h, x0:x0 + w] = rng.uniform(0.1, 0.9, 3)
    return np.clip(img, 0.0, 1.0)


def _outdoor(rng, n):
    horizon = int(n * rng.uniform(0.35, 0.55))
    sky_top, sky_bottom = np.array([0.45, 0.65, 0.95]), np.array([0.85, 0.92, 1.0])
    t = np.linspace(0, 1, horizon)[:, None, None]
    img = np.empty((n, n, 3))
    img[:horizon] = sky_top * (1 - t) + sky_bottom * t
    ground = rng.uniform(0.15, 0.5, 3) * np.array([0.8, 1.0, 0.6])
    texture = _blur(rng.standard_normal((n - horizon, n, 1)), 1) * 0.12
    img[horizon:] = ground + texture
    return np.clip(img, 0.0, 1.0)


FG_MAKERS = {"web": _web, "natural": _natural, "graphics": _graphics}
BG_MAKERS = {"indoor": _indoor, "outdoor": _outdoor}


def make_source(kind: str, rng: np.random.Generator, size: int) -> np.ndarray:
    makers = {**FG_MAKERS, **BG_MAKERS}
    if kind not in makers:
        raise ConfigError(f"unknown source class {kind!r}")
    return makers[kind](rng, size)


# dataset generation -----------------------------------------------------------


@dataclass
class GeneratorConfig:
    num_scenes: int = 20
    image_size: int = 96
    sigmas: tuple = STANDARD_SIGMAS
    grids: dict = field(default_factory=lambda: dict(DEFAULT_GRIDS))
    include_undistorted: bool = True
    samples_per_scene: int | None = None
    write_superimposed: bool = False
    seed: int = 0


def distortion_grid(cfg: GeneratorConfig) -> list[tuple[str, float]]:
    grid = [("none", 0.0)] if cfg.include_undistorted else []
    for kind, levels in cfg.grids.items():
        grid.extend((kind, float(level)) for level in levels)
    return grid


def _collect_sources(source_dir: Path, side: str, classes, size: int):
    found = []
    for cls in classes:
        for p in sorted((source_dir / side / cls).glob("*.ppm")):
            found.append((cls, resize_bilinear(read_ppm(p), size, size)))
    if not found:
        raise DataError(f"no {side} images found under {source_dir / side}/<class>/*.ppm")
    return found


def generate_dataset(out_dir, cfg: GeneratorConfig, source_dir=None) -> list[SceneTriplet]:
    """Write source PPMs and ``manifest.jsonl`` into ``out_dir``.

    Scene ``k`` pairs foreground ``k`` with background ``k``. Without a
    ``source_dir`` sources are procedural: foreground classes cycle through
    web/natural/graphics and backgrounds alternate indoor/outdoor.
    """
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(cfg.seed)
    n = cfg.image_size
    if source_dir is not None:
        fgs = _collect_sources(Path(source_dir), "fg", AR_CLASSES, n)
        bgs = _collect_sources(Path(source_dir), "bg", BACKGROUND_CLASSES, n)
        scenes = [(fgs[k % len(fgs)], bgs[k % len(bgs)]) for k in range(cfg.num_scenes)]
    else:
        scenes = []
        for k in range(cfg.num_scenes):
            fc, bc = AR_CLASSES[k % 3], BACKGROUND_CLASSES[k % 2]
            scenes.append(((fc, make_source(fc, rng, n)), (bc, make_source(bc, rng, n))))
    combos = list(itertools.product(distortion_grid(cfg), cfg.sigmas))
    triplets = []
    for k, ((fc, fg), (bc, bg)) in enumerate(scenes):
        fg_rel, bg_rel = f"images/fg_{k:03d}.ppm", f"images/bg_{k:03d}.ppm"
        write_ppm(out / fg_rel, fg)
        write_ppm(out / bg_rel, bg)
        chosen = range(len(combos))
        if cfg.samples_per_scene is not None and cfg.samples_per_scene < len(combos):
            chosen = sorted(rng.choice(len(combos), size=cfg.samples_per_scene, replace=False))
        for j in chosen:
            (kind, level), sigma = combos[j]
            tid = f"s{k:03d}_{j:03d}"
            sup_rel = None
            if cfg.write_superimposed:
                sup_rel = f"images/sup_{tid}.ppm"
                write_ppm(out / sup_rel, superimpose(fg, bg, sigma, (kind, level)))
            triplets.append(SceneTriplet(
                id=tid, scene_id=f"scene_{k:03d}", fg_image=fg_rel, bg_image=bg_rel,
                distortion_kind=kind, distortion_level=level, sigma=float(sigma),
                mos=round(planted_mos(kind, level, sigma), 6), fg_class=fc, bg_class=bc, sup_image=sup_rel,
            ))
    write_manifest(out / "manifest.jsonl", triplets)
    return triplets
