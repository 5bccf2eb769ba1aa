"""Rank and linear agreement criteria between predicted and subjective scores."""

from __future__ import annotations

import numpy as np

from ..errors import DegenerateInputError


def _pair(x, y, name: str):
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.size != y.size:
        raise DegenerateInputError(f"{name}: lengths differ ({x.size} vs {y.size})")
    if x.size < 2:
        raise DegenerateInputError(f"{name}: need at least 2 points")
    if np.all(x == x[0]) or np.all(y == y[0]):
        raise DegenerateInputError(f"{name}: input is constant")
    return x, y


def rankdata(x) -> np.ndarray:
    """1-based ranks, ties receive the average of the ranks they span."""
    x = np.asarray(x, dtype=np.float64).ravel()
    order = np.argsort(x, kind="mergesort")
    ranks = np.empty(x.size)
    sorted_x = x[order]
    i = 0
    while i < x.size:
        j = i
        while j + 1 < x.size and sorted_x[j + 1] == sorted_x[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def pearson(x, y) -> float:
    x, y = _pair(x, y, "pearson")
    xc, yc = x - x.mean(), y - y.mean()
    return float(np.clip((xc @ yc) / np.sqrt((xc @ xc) * (yc @ yc)), -1.0, 1.0))


def srcc(x, y) -> float:
    """Spearman correlation: Pearson correlation of average ranks."""
    x, y = _pair(x, y, "srcc")
    return pearson(rankdata(x), rankdata(y))


def krcc(x, y) -> float:
    """Kendall tau-b."""
    x, y = _pair(x, y, "krcc")
    n = x.size
    iu = np.triu_indices(n, k=1)
    dx = np.sign(x[:, None] - x[None, :])[iu]
    dy = np.sign(y[:, None] - y[None, :])[iu]
    n0 = n * (n - 1) / 2
    tx = np.count_nonzero(dx == 0)
    ty = np.count_nonzero(dy == 0)
    s = float(dx @ dy)
    return float(np.clip(s / np.sqrt((n0 - tx) * (n0 - ty)), -1.0, 1.0))


def plcc_rmse(q_fitted, m) -> tuple[float, float]:
    q, m = _pair(q_fitted, m, "plcc_rmse")
    return pearson(q, m), float(np.sqrt(np.mean((q - m) ** 2)))


def rmse(q_fitted, m) -> float:
    q = np.asarray(q_fitted, dtype=np.float64)
    m = np.asarray(m, dtype=np.float64)
    return float(np.sqrt(np.mean((q - m) ** 2)))
