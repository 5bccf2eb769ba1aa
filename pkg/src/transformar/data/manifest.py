"""Scene-triplet records and their line-delimited JSON manifests."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import DataError, ManifestError, TransformARError
from ..heads import AR_CLASSES, BACKGROUND_CLASSES
from .distortions import DISTORTION_KINDS, superimpose
from .images import read_ppm, resize_bilinear

STANDARD_SIGMAS = (0.26, 0.42, 0.58, 0.74)
LEVEL_RANGES = {
    "jpeg_proxy": (1.0, 100.0, True),
    "scale": (0.0, 1.0, False),
    "contrast": (0.0, 2.0, False),
}
FIELDS = ("id", "scene_id", "fg_image", "bg_image", "distortion", "sigma", "mos", "fg_class", "bg_class")


@dataclass(frozen=True)
class SceneTriplet:
    id: str
    scene_id: str
    fg_image: str
    bg_image: str
    distortion_kind: str
    distortion_level: float
    sigma: float
    mos: float
    fg_class: str
    bg_class: str
    sup_image: str | None = None

    def validate(self, strict_sigma: bool = False) -> None:
        if not 0.0 < self.sigma < 1.0:
            raise ManifestError(f"{self.id}: sigma {self.sigma} outside (0, 1)")
        if strict_sigma and not any(abs(self.sigma - s) < 1e-9 for s in STANDARD_SIGMAS):
            raise ManifestError(f"{self.id}: sigma {self.sigma} not in {STANDARD_SIGMAS}")
        if self.fg_class not in AR_CLASSES:
            raise ManifestError(f"{self.id}: fg_class {self.fg_class!r} not in {AR_CLASSES}")
        if self.bg_class not in BACKGROUND_CLASSES:
            raise ManifestError(f"{self.id}: bg_class {self.bg_class!r} not in {BACKGROUND_CLASSES}")
        if self.distortion_kind not in DISTORTION_KINDS:
            raise ManifestError(f"{self.id}: unknown distortion kind {self.distortion_kind!r}")
        if self.distortion_kind in LEVEL_RANGES:
            lo, hi, closed = LEVEL_RANGES[self.distortion_kind]
            ok = (lo <= self.distortion_level if closed else lo < self.distortion_level) and self.distortion_level <= hi
            if not ok:
                raise ManifestError(f"{self.id}: {self.distortion_kind} level {self.distortion_level} out of range")
        if not np.isfinite(self.mos):
            raise ManifestError(f"{self.id}: mos must be finite")

    @property
    def fg_label(self) -> int:
        return AR_CLASSES.index(self.fg_class)

    @property
    def bg_label(self) -> int:
        return BACKGROUND_CLASSES.index(self.bg_class)

    def to_record(self) -> dict:
        rec = {
            "id": self.id,
            "scene_id": self.scene_id,
            "fg_image": self.fg_image,
            "bg_image": self.bg_image,
            "distortion": {"kind": self.distortion_kind, "level": self.distortion_level},
            "sigma": self.sigma,
            "mos": self.mos,
            "fg_class": self.fg_class,
            "bg_class": self.bg_class,
        }
        if self.sup_image is not None:
            rec["sup_image"] = self.sup_image
        return rec

    @classmethod
    def from_record(cls, rec: dict) -> "SceneTriplet":
        missing = [f for f in FIELDS if f not in rec]
        if missing:
            raise ManifestError(f"record missing fields: {', '.join(missing)}")
        dist = rec["distortion"]
        if not isinstance(dist, dict) or "kind" not in dist or "level" not in dist:
            raise ManifestError("distortion must be an object with 'kind' and 'level'")
        return cls(
            id=str(rec["id"]),
            scene_id=str(rec["scene_id"]),
            fg_image=str(rec["fg_image"]),
            bg_image=str(rec["bg_image"]),
            distortion_kind=str(dist["kind"]),
            distortion_level=float(dist["level"]),
            sigma=float(rec["sigma"]),
            mos=float(rec["mos"]),
            fg_class=str(rec["fg_class"]),
            bg_class=str(rec["bg_class"]),
            sup_image=rec.get("sup_image"),
        )


def read_manifest(path, strict_sigma: bool = False) -> list[SceneTriplet]:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"manifest not found: {path}")
    triplets = []
    seen = set()
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                t = SceneTriplet.from_record(json.loads(line))
                t.validate(strict_sigma)
            except json.JSONDecodeError as exc:
                raise ManifestError(f"{path}:{lineno}: malformed JSON ({exc.msg})") from exc
            except (TransformARError, TypeError, ValueError) as exc:
                raise ManifestError(f"{path}:{lineno}: {exc}") from exc
            if t.id in seen:
                raise ManifestError(f"{path}:{lineno}: duplicate id {t.id!r}")
            seen.add(t.id)
            triplets.append(t)
    return triplets


def write_manifest(path, triplets) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for t in triplets:
            fh.write(json.dumps(t.to_record(), sort_keys=False) + "\n")


@dataclass
class TripletArrays:
    """Images of a set of triplets, resized to the encoder input."""

    fg: np.ndarray
    bg: np.ndarray
    sup: np.ndarray
    mos: np.ndarray
    fg_labels: np.ndarray
    bg_labels: np.ndarray
    sigma: np.ndarray
    ids: list

    def __len__(self) -> int:
        return len(self.ids)

    def subset(self, idx) -> "TripletArrays":
        idx = np.asarray(idx, dtype=int)
        return TripletArrays(self.fg[idx], self.bg[idx], self.sup[idx], self.mos[idx], self.fg_labels[idx],
                             self.bg_labels[idx], self.sigma[idx], [self.ids[i] for i in idx])


def _resolve(base: Path, p: str) -> Path:
    q = Path(p)
    return q if q.is_absolute() else base / q


def load_triplet_images(t: SceneTriplet, base_dir, height: int, width: int):
    base = Path(base_dir)
    fg = read_ppm(_resolve(base, t.fg_image))
    bg = read_ppm(_resolve(base, t.bg_image))
    if t.sup_image is not None:
        sup = read_ppm(_resolve(base, t.sup_image))
    else:
        if fg.shape != bg.shape:
            bg = resize_bilinear(bg, fg.shape[0], fg.shape[1])
        sup = superimpose(fg, bg, t.sigma, (t.distortion_kind, t.distortion_level))

    def fit(img):
        return resize_bilinear(img, height, width)

    return fit(fg), fit(bg), fit(sup)


def load_arrays(triplets, base_dir, height: int, width: int) -> TripletArrays:
    cache: dict = {}
    fgs, bgs, sups = [], [], []
    for t in triplets:
        key = (t.fg_image, t.bg_image, t.sup_image, t.sigma, t.distortion_kind, t.distortion_level)
        if key not in cache:
            cache[key] = load_triplet_images(t, base_dir, height, width)
        fg, bg, sup = cache[key]
        fgs.append(fg)
        bgs.append(bg)
        sups.append(sup)
    shape = (0, height, width, 3)
    return TripletArrays(
        fg=np.stack(fgs) if fgs else np.zeros(shape),
        bg=np.stack(bgs) if bgs else np.zeros(shape),
        sup=np.stack(sups) if sups else np.zeros(shape),
        mos=np.array([t.mos for t in triplets], dtype=np.float64),
        fg_labels=np.array([t.fg_label for t in triplets], dtype=int),
        bg_labels=np.array([t.bg_label for t in triplets], dtype=int),
        sigma=np.array([t.sigma for t in triplets], dtype=np.float64),
        ids=[t.id for t in triplets],
    )
