"""Multi-head scaled dot-product attention shared by encoders and decoders."""

from __future__ import annotations

import math

from .autodiff import Tensor, linear, matmul, permute, reshape, softmax, transpose
from .errors import ShapeError


def attention_shapes(prefix: str, dim: int) -> dict[str, tuple[int, ...]]:
    shapes = {}
    for part in ("q", "k", "v", "proj"):
        shapes[f"{prefix}.{part}.weight"] = (dim, dim)
        shapes[f"{prefix}.{part}.bias"] = (dim,)
    return shapes


def _split_heads(x: Tensor, num_heads: int) -> Tensor:
    *lead, t, c = x.shape
    x = reshape(x, tuple(lead) + (t, num_heads, c // num_heads))
    nd = x.ndim
    # [..., T, h, d] -> [..., h, T, d]
    return permute(x, tuple(range(nd - 3)) + (nd - 2, nd - 3, nd - 1))


def _merge_heads(x: Tensor) -> Tensor:
    nd = x.ndim
    x = permute(x, tuple(range(nd - 3)) + (nd - 2, nd - 3, nd - 1))
    *lead, t, h, d = x.shape
    return reshape(x, tuple(lead) + (t, h * d))


def multi_head_attention(
    x_query: Tensor, x_context: Tensor, params, prefix: str, num_heads: int
) -> tuple[Tensor, Tensor]:
    """softmax(q k^T / sqrt(d_head)) v per head, concatenated and projected.

    Queries come from ``x_query`` and keys/values from ``x_context``; pass
    the same tensor twice for self-attention. Returns the projected output
    and the attention probabilities with shape ``[..., heads, Tq, Tk]``.
    """
    if x_query.shape[:-2] != x_context.shape[:-2] or x_query.shape[-1] != x_context.shape[-1]:
        raise ShapeError(f"attention: query {x_query.shape} and context {x_context.shape} disagree")
    dim = x_query.shape[-1]
    if dim % num_heads:
        raise ShapeError(f"attention: dim {dim} not divisible by {num_heads} heads")
    head_dim = dim // num_heads

    def proj(x, part):
        return linear(x, params[f"{prefix}.{part}.weight"], params[f"{prefix}.{part}.bias"])

    q = _split_heads(proj(x_query, "q"), num_heads)
    k = _split_heads(proj(x_context, "k"), num_heads)
    v = _split_heads(proj(x_context, "v"), num_heads)
    scores = matmul(q, transpose(k)) * (1.0 / math.sqrt(head_dim))
    probs = softmax(scores, axis=-1)
    out = _merge_heads(matmul(probs, v))
    return proj(out, "proj"), probs
