"""Per-token regressors, pMOS aggregation and the quality objective terms."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Iterable

import numpy as np

from .autodiff import Tensor, as_tensor, gelu, linear, mul, record, reshape, square, tensor_abs, tensor_sum
from .errors import ConfigError, ShapeError
from .params import ParameterSet, init_fan_in, make_tensors

VARIANTS = ("base", "kd", "kd_plus")


@dataclass(frozen=True)
class LossConfig:
    zeta: float = 0.51
    delta: float = 1.0
    alpha: float = 0.7
    lambda0: float = 1.0
    lambda1: float = 1.0
    lambda2: float = 1.0
    lambda3: float = 0.05

    def __post_init__(self):
        if not 0.0 <= self.zeta <= 1.0:
            raise ConfigError(f"zeta must lie in [0, 1], got {self.zeta}")
        if self.delta <= 0:
            raise ConfigError(f"delta must be positive, got {self.delta}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f"alpha must lie in [0, 1], got {self.alpha}")

    def to_dict(self) -> dict:
        return asdict(self)


class RegressorWeights(ParameterSet):
    """Token MLP C -> C/2 -> 1 and a bias-free pooling vector over T tokens."""

    def __init__(self, dim: int, num_tokens: int, tensors: dict[str, Tensor]):
        self.dim = dim
        self.num_tokens = num_tokens
        super().__init__(tensors)

    def expected_shapes(self):
        c, half = self.dim, self.dim // 2
        return {
            "mlp.fc1.weight": (half, c), "mlp.fc1.bias": (half,),
            "mlp.fc2.weight": (1, half), "mlp.fc2.bias": (1,),
            "pool.weight": (self.num_tokens,),
        }

    @classmethod
    def initialize(cls, dim: int, num_tokens: int, rng: np.random.Generator) -> "RegressorWeights":
        arrays = {**init_fan_in(rng, "mlp.fc1", dim // 2, dim), **init_fan_in(rng, "mlp.fc2", 1, dim // 2)}
        arrays["pool.weight"] = np.full(num_tokens, 1.0 / num_tokens)
        return cls(dim, num_tokens, make_tensors(arrays))


def token_scores(g: Tensor, w: RegressorWeights) -> Tensor:
    """h_i = MLP(g_i), shape ``[..., T]``."""
    if g.shape[-2:] != (w.num_tokens, w.dim):
        raise ShapeError(f"regressor expects [..., {w.num_tokens}, {w.dim}] tokens, got {g.shape}")
    hidden = gelu(linear(g, w["mlp.fc1.weight"], w["mlp.fc1.bias"]))
    h = linear(hidden, w["mlp.fc2.weight"], w["mlp.fc2.bias"])
    return reshape(h, h.shape[:-1])


def regress_and_pool(g: Tensor, w: RegressorWeights) -> Tensor:
    """S = sum_i W_i h_i over the quality tokens."""
    return tensor_sum(mul(token_scores(g, w), w["pool.weight"]), axis=-1)


def aggregate_pmos(s_as, s_bs, zeta: float):
    if not 0.0 <= zeta <= 1.0:
        raise ConfigError(f"zeta must lie in [0, 1], got {zeta}")
    if isinstance(s_as, Tensor) or isinstance(s_bs, Tensor):
        return as_tensor(s_as) * zeta + as_tensor(s_bs) * (1.0 - zeta)
    return zeta * s_as + (1.0 - zeta) * s_bs


def _residual(q, q_hat) -> Tensor:
    q_hat = as_tensor(q_hat)
    target = np.broadcast_to(np.asarray(q, dtype=np.float64), q_hat.shape)
    return q_hat - Tensor(target)


def huber_loss(q, q_hat, delta: float = 1.0) -> Tensor:
    """Mean Huber loss between targets ``q`` and predictions ``q_hat``."""
    if delta <= 0:
        raise ConfigError(f"delta must be positive, got {delta}")
    r = _residual(q, q_hat)
    rd = r.data
    a = np.abs(rd)
    quad = a <= delta
    per = np.where(quad, 0.5 * rd * rd, delta * (a - 0.5 * delta))
    n = rd.size

    def grad(g):
        return g * np.where(quad, rd, delta * np.sign(rd)) / n

    return record(np.asarray(per.sum() / n), [(r, grad)])


def mse_loss(q, q_hat) -> Tensor:
    r = _residual(q, q_hat)
    return tensor_sum(square(r)) * (1.0 / r.size)


def elastic_net_penalty(params: Iterable[Tensor], alpha: float = 0.7) -> Tensor:
    """alpha * ||theta||_1 + (1 - alpha) * ||theta||_2^2 over all given tensors."""
    if not 0.0 <= alpha <= 1.0:
        raise ConfigError(f"alpha must lie in [0, 1], got {alpha}")
    total = None
    for p in params:
        term = tensor_sum(tensor_abs(p)) * alpha + tensor_sum(square(p)) * (1.0 - alpha)
        total = term if total is None else total + term
    return total if total is not None else Tensor(0.0)


def total_loss(l_h, l_ncs, l_ce, l_r, cfg: LossConfig, variant: str) -> Tensor:
    """lambda0 L_H + lambda1 L_NCS + lambda2 L_CE + lambda3 L_R.

    For the ``base`` variant the distillation terms do not exist and are
    ignored even when passed.
    """
    if variant not in VARIANTS:
        raise ConfigError(f"unknown variant {variant!r}")
    loss = as_tensor(l_h) * cfg.lambda0 + as_tensor(l_r) * cfg.lambda3
    if variant != "base":
        loss = loss + as_tensor(l_ncs) * cfg.lambda1 + as_tensor(l_ce) * cfg.lambda2
    return loss
