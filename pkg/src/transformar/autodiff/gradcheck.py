"""Central finite-difference checks for the autodiff engine."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor, backward


@dataclass
class GradCheckResult:
    max_error: float
    worst_input: int
    worst_index: tuple[int, ...]

    def passed(self, tol: float = 1e-3) -> bool:
        return self.max_error < tol


def numeric_gradient(fn: Callable[[], Tensor], t: Tensor, h: float = 1e-4) -> np.ndarray:
    """d fn() / d t by central differences, perturbing ``t.data`` in place."""
    grad = np.zeros_like(t.data)
    flat = t.data.reshape(-1)
    out = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = float(fn().data)
        flat[i] = orig - h
        down = float(fn().data)
        flat[i] = orig
        out[i] = (up - down) / (2 * h)
    return grad


def check_gradients(
    fn: Callable[[], Tensor], inputs: Sequence[Tensor], h: float = 1e-4, max_entries: int | None = None,
    rng: np.random.Generator | None = None,
) -> GradCheckResult:
    """Compare analytic and numeric gradients of the scalar ``fn()``.

    The error per entry is ``|analytic - numeric| / max(1, |numeric|)``.
    With ``max_entries`` only a random subset of each input's entries is
    probed, which keeps checks of whole models affordable.
    """
    for t in inputs:
        t.grad = None
    backward(fn())
    analytic = [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in inputs]
    worst = GradCheckResult(0.0, -1, ())
    for k, t in enumerate(inputs):
        flat = t.data.reshape(-1)
        idx = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            idx = (rng or np.random.default_rng(0)).choice(flat.size, size=max_entries, replace=False)
        for i in idx:
            orig = flat[i]
            flat[i] = orig + h
            up = float(fn().data)
            flat[i] = orig - h
            down = float(fn().data)
            flat[i] = orig
            num = (up - down) / (2 * h)
            err = abs(analytic[k].reshape(-1)[i] - num) / max(1.0, abs(num))
            if err > worst.max_error:
                worst = GradCheckResult(float(err), k, np.unravel_index(i, t.shape))
    return worst
