"""Quality-aware decoder: one cross-attention block over shift tokens."""

from __future__ import annotations

import numpy as np

from .attention import attention_shapes, multi_head_attention
from .autodiff import Tensor, gelu, layer_norm, linear
from .errors import ConfigError, ShapeError
from .params import ParameterSet, init_linear, init_norm, make_tensors

SKIP_SOURCES = ("shift", "query")


def decoder_shapes(dim: int, ffnn_ratio: int) -> dict[str, tuple[int, ...]]:
    hidden = dim * ffnn_ratio
    shapes = {}
    for norm in ("norm_q", "norm_kv", "norm_ffn"):
        shapes[f"{norm}.weight"] = (dim,)
        shapes[f"{norm}.bias"] = (dim,)
    shapes.update(attention_shapes("cross_attn", dim))
    shapes.update({
        "mlp.fc1.weight": (hidden, dim),
        "mlp.fc1.bias": (hidden,),
        "mlp.fc2.weight": (dim, hidden),
        "mlp.fc2.bias": (dim,),
    })
    return shapes


class DecoderWeights(ParameterSet):
    def __init__(self, dim: int, num_heads: int, tensors: dict[str, Tensor], ffnn_ratio: int = 4,
                 ln_eps: float = 1e-6):
        if dim % num_heads:
            raise ConfigError(f"decoder dim {dim} not divisible by {num_heads} heads")
        self.dim = dim
        self.num_heads = num_heads
        self.ffnn_ratio = ffnn_ratio
        self.ln_eps = ln_eps
        super().__init__(tensors)

    def expected_shapes(self):
        return decoder_shapes(self.dim, self.ffnn_ratio)

    @classmethod
    def initialize(cls, dim: int, num_heads: int, rng: np.random.Generator, ffnn_ratio: int = 4,
                   ln_eps: float = 1e-6) -> "DecoderWeights":
        arrays = {}
        for norm in ("norm_q", "norm_kv", "norm_ffn"):
            arrays.update(init_norm(norm, dim))
        for part in ("q", "k", "v", "proj"):
            arrays.update(init_linear(rng, f"cross_attn.{part}", dim, dim))
        arrays.update(init_linear(rng, "mlp.fc1", dim * ffnn_ratio, dim))
        arrays.update(init_linear(rng, "mlp.fc2", dim, dim * ffnn_ratio))
        return cls(dim, num_heads, make_tensors(arrays), ffnn_ratio, ln_eps)


def cross_attention(f_ref: Tensor, d_shift: Tensor, w: DecoderWeights, return_attention: bool = False):
    """Multi-head CA with queries from the reference tokens and keys/values from the shift tokens."""
    if f_ref.shape != d_shift.shape:
        raise ShapeError(f"cross_attention: reference {f_ref.shape} and shift {d_shift.shape} differ")
    if f_ref.shape[-1] != w.dim:
        raise ShapeError(f"cross_attention: token dim {f_ref.shape[-1]} != decoder dim {w.dim}")
    q_in = layer_norm(f_ref, w["norm_q.weight"], w["norm_q.bias"], w.ln_eps)
    kv_in = layer_norm(d_shift, w["norm_kv.weight"], w["norm_kv.bias"], w.ln_eps)
    out, probs = multi_head_attention(q_in, kv_in, w, "cross_attn", w.num_heads)
    return (out, probs.data) if return_attention else out


def select_tokens(seq: Tensor, include_class_token: bool) -> Tensor:
    return seq if include_class_token else seq[..., 1:, :]


def decode(f_ref: Tensor, d_shift: Tensor, w: DecoderWeights, *, include_class_token: bool = False,
           skip_source: str = "shift", return_attention: bool = False):
    """Quality tokens g = FFNN(LN(x)) + x with x = CA(f_ref, d_shift) + skip.

    ``f_ref`` and ``d_shift`` carry N+1 tokens; the class token (row 0) is
    fed to the block only when ``include_class_token`` is set. ``skip_source``
    picks the residual added to the attention output: the shift tokens
    (default) or the reference tokens.
    """
    if skip_source not in SKIP_SOURCES:
        raise ConfigError(f"skip_source must be one of {SKIP_SOURCES}, got {skip_source!r}")
    if f_ref.shape != d_shift.shape:
        raise ShapeError(f"decode: reference {f_ref.shape} and shift {d_shift.shape} differ")
    f_ref = select_tokens(f_ref, include_class_token)
    d_shift = select_tokens(d_shift, include_class_token)
    ca, probs = cross_attention(f_ref, d_shift, w, return_attention=True)
    x = ca + (d_shift if skip_source == "shift" else f_ref)
    normed = layer_norm(x, w["norm_ffn.weight"], w["norm_ffn.bias"], w.ln_eps)
    hidden = gelu(linear(normed, w["mlp.fc1.weight"], w["mlp.fc1.bias"]))
    g = linear(hidden, w["mlp.fc2.weight"], w["mlp.fc2.bias"]) + x
    return (g, probs) if return_attention else g
