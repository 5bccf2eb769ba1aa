"""Projection heads over reference class tokens and the distillation losses."""

from __future__ import annotations

import numpy as np

from .autodiff import Tensor, gelu, l2_normalize, linear, log_softmax, mul, stop_gradient, tensor_sum
from .errors import ConfigError, DegenerateInputError, ShapeError
from .params import ParameterSet, init_linear, make_tensors

AR_CLASSES = ("web", "natural", "graphics")
BACKGROUND_CLASSES = ("indoor", "outdoor")
NORM_FLOOR = 1e-12


class ProjectionHead(ParameterSet):
    """C -> 2C -> C (refined class token) -> num_classes (logits)."""

    def __init__(self, dim: int, num_classes: int, tensors: dict[str, Tensor], hidden_dim: int | None = None):
        self.dim = dim
        self.num_classes = num_classes
        self.hidden_dim = hidden_dim or 2 * dim
        super().__init__(tensors)

    def expected_shapes(self):
        c, hd, k = self.dim, self.hidden_dim, self.num_classes
        return {
            "fc1.weight": (hd, c), "fc1.bias": (hd,),
            "fc2.weight": (c, hd), "fc2.bias": (c,),
            "logits.weight": (k, c), "logits.bias": (k,),
        }

    @classmethod
    def initialize(cls, dim: int, num_classes: int, rng: np.random.Generator,
                   hidden_dim: int | None = None) -> "ProjectionHead":
        hd = hidden_dim or 2 * dim
        arrays = {
            **init_linear(rng, "fc1", hd, dim),
            **init_linear(rng, "fc2", dim, hd),
            **init_linear(rng, "logits", num_classes, dim),
        }
        return cls(dim, num_classes, make_tensors(arrays), hd)


def project_head(f_cls: Tensor, head: ProjectionHead) -> tuple[Tensor, Tensor]:
    """Return ``(logits, f_hat_cls)`` for one class token or a batch of them."""
    if f_cls.shape[-1] != head.dim:
        raise ShapeError(f"project_head: input dim {f_cls.shape[-1]} != head dim {head.dim}")
    hidden = gelu(linear(f_cls, head["fc1.weight"], head["fc1.bias"]))
    f_hat = linear(hidden, head["fc2.weight"], head["fc2.bias"])
    logits = linear(gelu(f_hat), head["logits.weight"], head["logits.bias"])
    return logits, f_hat


def cross_entropy(labels, logits: Tensor, reduction: str = "mean") -> Tensor:
    """-log softmax(logits)[label], reduced over the batch."""
    labels = np.atleast_1d(np.asarray(labels))
    if logits.ndim == 1:
        logits = logits.reshape(1, -1)
    batch, k = logits.shape
    if labels.shape != (batch,):
        raise ShapeError(f"cross_entropy: {labels.shape[0]} labels for {batch} logit rows")
    if not np.issubdtype(labels.dtype, np.integer) or labels.min() < 0 or labels.max() >= k:
        raise ConfigError(f"cross_entropy: class indices must be integers in [0, {k}), got {labels.tolist()}")
    onehot = np.zeros((batch, k))
    onehot[np.arange(batch), labels] = 1.0
    total = -tensor_sum(mul(log_softmax(logits, axis=-1), Tensor(onehot)))
    if reduction == "mean":
        return total * (1.0 / batch)
    if reduction == "sum":
        return total
    raise ConfigError(f"unknown reduction {reduction!r}")


def classification_loss(y_a, z_a: Tensor, y_b, z_b: Tensor, reduction: str = "mean") -> Tensor:
    return cross_entropy(y_a, z_a, reduction) * 0.5 + cross_entropy(y_b, z_b, reduction) * 0.5


def negative_cosine(p: Tensor, z: Tensor) -> Tensor:
    """-(p/|p|) . (sg(z)/|sg(z)|), averaged over any leading batch axis."""
    if p.shape != z.shape:
        raise ShapeError(f"negative_cosine: shapes {p.shape} and {z.shape} differ")
    for name, t in (("prediction", p), ("target", z)):
        if np.any(np.sqrt((t.data * t.data).sum(axis=-1)) < NORM_FLOOR):
            raise DegenerateInputError(f"negative_cosine: {name} vector has zero norm")
    cos = tensor_sum(mul(l2_normalize(p), l2_normalize(stop_gradient(z))), axis=-1)
    batch = cos.size
    return -tensor_sum(cos) * (1.0 / batch)


def alignment_loss(f_s_cls: Tensor, f_hat_a: Tensor, f_hat_b: Tensor) -> Tensor:
    """NCS(f_s_cls, sg(f_hat_a)) + NCS(f_s_cls, sg(f_hat_b)); lies in [-2, 2]."""
    return negative_cosine(f_s_cls, f_hat_a) + negative_cosine(f_s_cls, f_hat_b)
