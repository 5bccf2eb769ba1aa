"""AdamW with decoupled weight decay and a reduce-on-plateau schedule."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0


def adamw_step(param: np.ndarray, grad: np.ndarray, state: AdamState, lr: float, beta1: float = 0.9,
               beta2: float = 0.999, eps: float = 1e-8, weight_decay: float = 0.01) -> np.ndarray:
    """One AdamW update; returns the new parameter array and advances ``state``.

    Decay is applied to the parameter before the moment step, scaled by the
    learning rate and independent of the gradient.
    """
    param = param * (1.0 - lr * weight_decay)
    state.step += 1
    state.m = beta1 * state.m + (1.0 - beta1) * grad
    state.v = beta2 * state.v + (1.0 - beta2) * grad * grad
    m_hat = state.m / (1.0 - beta1**state.step)
    v_hat = state.v / (1.0 - beta2**state.step)
    return param - lr * m_hat / (np.sqrt(v_hat) + eps)


class AdamW:
    """AdamW over named parameter groups, each with its own learning rate.

    Parameters without a gradient after ``backward`` (unreached or behind a
    stop-gradient) are skipped entirely, including weight decay.
    """

    def __init__(self, groups: dict[str, dict], beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8,
                 weight_decay: float = 0.01):
        # groups: name -> {"lr": float, "params": {param_name: Tensor}}
        self.groups = groups
        self.beta1, self.beta2, self.eps, self.weight_decay = beta1, beta2, eps, weight_decay
        self.state: dict[str, AdamState] = {}
        seen = set()
        for g in groups.values():
            for name in g["params"]:
                if name in seen:
                    raise ValueError(f"parameter {name!r} appears in two optimizer groups")
                seen.add(name)

    def zero_grad(self) -> None:
        for g in self.groups.values():
            for t in g["params"].values():
                t.grad = None

    def step(self) -> None:
        for g in self.groups.values():
            lr = g["lr"]
            for name, t in g["params"].items():
                if t.grad is None:
                    continue
                st = self.state.get(name)
                if st is None:
                    st = self.state[name] = AdamState(np.zeros_like(t.data), np.zeros_like(t.data))
                t.data = adamw_step(t.data, t.grad, st, lr, self.beta1, self.beta2, self.eps, self.weight_decay)

    def state_arrays(self) -> dict[str, np.ndarray]:
        out = {}
        for name, st in sorted(self.state.items()):
            out[f"optim.m.{name}"] = st.m
            out[f"optim.v.{name}"] = st.v
            out[f"optim.step.{name}"] = np.array(float(st.step))
        return out

    def load_state_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        self.state = {}
        for key, arr in arrays.items():
            if key.startswith("optim.step."):
                name = key[len("optim.step."):]
                self.state[name] = AdamState(arrays[f"optim.m.{name}"].copy(), arrays[f"optim.v.{name}"].copy(),
                                             int(arr))


class ReduceLROnPlateau:
    """Multiply the learning rate by ``factor`` after ``patience`` epochs without improvement.

    An epoch improves when the monitored value drops below the best seen by
    more than ``threshold``. The counter resets on improvement and on every
    reduction; the rate never goes below ``min_lr``.
    """

    def __init__(self, lr: float, patience: int = 20, factor: float = 0.5, min_lr: float = 1e-7,
                 threshold: float = 1e-6):
        self.lr = lr
        self.patience = patience
        self.factor = factor
        self.min_lr = min_lr
        self.threshold = threshold
        self.best = math.inf
        self.bad_epochs = 0
        self.reductions = 0

    def step(self, value: float) -> float:
        if value < self.best - self.threshold:
            self.best = value
            self.bad_epochs = 0
        else:
            self.bad_epochs += 1
            if self.bad_epochs >= self.patience:
                self.lr = max(self.lr * self.factor, self.min_lr)
                self.bad_epochs = 0
                self.reductions += 1
        return self.lr

    @property
    def scale(self) -> float:
        """Cumulative multiplier applied so far (floor not included)."""
        return self.factor**self.reductions

    def state_dict(self) -> dict:
        return {"lr": self.lr, "best": self.best, "bad_epochs": self.bad_epochs, "reductions": self.reductions}

    def load_state_dict(self, d: dict) -> None:
        self.lr, self.best = d["lr"], d["best"]
        self.bad_epochs, self.reductions = d["bad_epochs"], d["reductions"]


def lr_plateau(history, patience: int = 20, factor: float = 0.5, lr: float = 1e-4, min_lr: float = 1e-7) -> float:
    """Learning rate after replaying a whole history of monitored values."""
    sched = ReduceLROnPlateau(lr, patience, factor, min_lr)
    for value in history:
        sched.step(value)
    return sched.lr
