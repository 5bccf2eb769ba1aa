"""Scene-disjoint train/test fold construction."""

from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import DataError


@dataclass(frozen=True)
class FoldSplit:
    index: int
    train_ids: tuple
    test_ids: tuple

    def to_dict(self) -> dict:
        return {"index": self.index, "train_ids": list(self.train_ids), "test_ids": list(self.test_ids)}

    @classmethod
    def from_dict(cls, d: dict) -> "FoldSplit":
        return cls(int(d["index"]), tuple(d["train_ids"]), tuple(d["test_ids"]))


def _scene_groups(triplets) -> dict[str, list[str]]:
    groups: dict[str, list[str]] = defaultdict(list)
    for t in triplets:
        groups[t.scene_id].append(t.id)
    return groups


def split_by_scene(triplets, fraction: float, rng: np.random.Generator) -> tuple[list[str], list[str]]:
    """Assign whole scenes to the first part until it holds ``fraction`` of the items."""
    groups = _scene_groups(triplets)
    scenes = sorted(groups)
    order = rng.permutation(len(scenes))
    target = int(round(fraction * sum(len(v) for v in groups.values())))
    first, second = [], []
    for i in order:
        ids = groups[scenes[i]]
        if len(first) + len(ids) <= target:
            first.extend(ids)
        else:
            second.extend(ids)
    return first, second


def make_folds(triplets, k: int, seed: int, train_fraction: float = 0.5) -> list[FoldSplit]:
    """``k`` random scene-disjoint splits; a pure function of its arguments."""
    triplets = list(triplets)
    if not triplets:
        raise DataError("cannot build folds from an empty dataset")
    if len(_scene_groups(triplets)) < 2:
        raise DataError("need at least two distinct scenes to build scene-disjoint folds")
    rng = np.random.default_rng(seed)
    folds = []
    for i in range(k):
        train, test = split_by_scene(triplets, train_fraction, rng)
        folds.append(FoldSplit(i, tuple(sorted(train)), tuple(sorted(test))))
    return folds


def fold_coverage(folds, triplets) -> float:
    """Fraction of items that land in at least one test set."""
    covered = set()
    for f in folds:
        covered.update(f.test_ids)
    ids = {t.id for t in triplets}
    return len(covered & ids) / len(ids)


def write_folds(path, folds) -> None:
    Path(path).write_text(json.dumps([f.to_dict() for f in folds], indent=1))


def read_folds(path) -> list[FoldSplit]:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"fold file not found: {path}")
    return [FoldSplit.from_dict(d) for d in json.loads(path.read_text())]
