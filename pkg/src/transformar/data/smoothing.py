"""Additive label smoothing for regression targets."""

from __future__ import annotations

import numpy as np


def smooth_labels(mos, rng: np.random.Generator | None = None, eta=None, eps=None):
    """MOS + eta * eps with eta ~ U(-1, 1) and eps ~ N(0, 1).

    ``eta`` and ``eps`` may be injected, in which case ``rng`` is unused.
    Works elementwise on scalars or arrays and never modifies its input.
    """
    mos = np.asarray(mos, dtype=np.float64)
    if eta is None:
        eta = rng.uniform(-1.0, 1.0, size=mos.shape)
    if eps is None:
        eps = rng.standard_normal(size=mos.shape)
    out = mos + np.asarray(eta) * np.asarray(eps)
    return float(out) if out.ndim == 0 else out
