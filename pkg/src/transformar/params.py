"""Named parameter collections and initialisers."""

from __future__ import annotations

from typing import Iterator

import numpy as np

from .autodiff import Tensor
from .errors import MissingTensorError, UnexpectedTensorError, WeightShapeError


def trunc_normal(rng: np.random.Generator, shape, std: float = 0.02) -> np.ndarray:
    """Normal(0, std) truncated to +-2 std by resampling."""
    out = rng.normal(0.0, std, size=shape)
    bad = np.abs(out) > 2 * std
    while bad.any():
        out[bad] = rng.normal(0.0, std, size=int(bad.sum()))
        bad = np.abs(out) > 2 * std
    return out


class ParameterSet:
    """Ordered mapping of parameter names to tensors with fixed shapes.

    Subclasses implement ``expected_shapes`` and ``init_array``.
    """

    def __init__(self, tensors: dict[str, Tensor]):
        self.tensors = dict(tensors)
        self.validate()

    def expected_shapes(self) -> dict[str, tuple[int, ...]]:
        raise NotImplementedError

    def validate(self) -> None:
        expected = self.expected_shapes()
        missing = [n for n in expected if n not in self.tensors]
        if missing:
            raise MissingTensorError(f"missing tensors: {', '.join(missing)}")
        extra = [n for n in self.tensors if n not in expected]
        if extra:
            raise UnexpectedTensorError(f"unexpected tensors: {', '.join(extra)}")
        for name, shape in expected.items():
            if self.tensors[name].shape != tuple(shape):
                raise WeightShapeError(
                    f"tensor {name!r} has shape {self.tensors[name].shape}, expected {tuple(shape)}"
                )

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self.tensors

    def __iter__(self) -> Iterator[str]:
        return iter(self.tensors)

    def items(self):
        return self.tensors.items()

    def parameters(self) -> list[Tensor]:
        return list(self.tensors.values())

    def arrays(self) -> dict[str, np.ndarray]:
        return {n: t.data for n, t in self.tensors.items()}

    def requires_grad_(self, flag: bool = True):
        for t in self.tensors.values():
            t.requires_grad = flag
        return self

    def _from_arrays(self, arrays: dict[str, np.ndarray]):
        clone = object.__new__(type(self))
        clone.__dict__.update(self.__dict__)
        clone.tensors = {n: Tensor(a, requires_grad=self.tensors[n].requires_grad, name=n) for n, a in arrays.items()}
        return clone

    def copy(self):
        """Deep copy with independent storage."""
        return self._from_arrays({n: t.data.copy() for n, t in self.tensors.items()})


def make_tensors(arrays: dict[str, np.ndarray], requires_grad: bool = True) -> dict[str, Tensor]:
    return {n: Tensor(a, requires_grad=requires_grad, name=n) for n, a in arrays.items()}


def init_linear(rng: np.random.Generator, prefix: str, n_out: int, n_in: int, std: float = 0.02) -> dict[str, np.ndarray]:
    return {f"{prefix}.weight": trunc_normal(rng, (n_out, n_in), std), f"{prefix}.bias": np.zeros(n_out)}


def init_fan_in(rng: np.random.Generator, prefix: str, n_out: int, n_in: int) -> dict[str, np.ndarray]:
    """Uniform(-1/sqrt(n_in), 1/sqrt(n_in)) weights and biases, for freshly added heads."""
    bound = 1.0 / np.sqrt(n_in)
    return {
        f"{prefix}.weight": rng.uniform(-bound, bound, (n_out, n_in)),
        f"{prefix}.bias": rng.uniform(-bound, bound, n_out),
    }


def init_norm(prefix: str, dim: int) -> dict[str, np.ndarray]:
    return {f"{prefix}.weight": np.ones(dim), f"{prefix}.bias": np.zeros(dim)}
