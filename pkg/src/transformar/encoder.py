"""Content-aware ViT encoders and the L1 shift representation."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .attention import attention_shapes, multi_head_attention
from .autodiff import Tensor, gelu, layer_norm, linear, prepend_token, sub, tensor_abs
from .errors import ConfigError, ShapeError
from .params import ParameterSet, init_linear, init_norm, make_tensors, trunc_normal


@dataclass(frozen=True)
class EncoderConfig:
    image_height: int = 96
    image_width: int = 96
    patch_size: int = 16
    embed_dim: int = 64
    num_heads: int = 4
    num_layers: int = 2
    ffnn_ratio: int = 4
    ln_eps: float = 1e-6

    def __post_init__(self):
        if self.patch_size <= 0 or self.image_height % self.patch_size or self.image_width % self.patch_size:
            raise ConfigError(
                f"image {self.image_height}x{self.image_width} is not divisible into {self.patch_size}px patches"
            )
        if self.embed_dim % self.num_heads:
            raise ConfigError(f"embed_dim {self.embed_dim} not divisible by num_heads {self.num_heads}")
        if self.num_layers < 1:
            raise ConfigError("num_layers must be >= 1")
        if self.ffnn_ratio < 1:
            raise ConfigError("ffnn_ratio must be >= 1")

    @property
    def grid(self) -> tuple[int, int]:
        return self.image_height // self.patch_size, self.image_width // self.patch_size

    @property
    def num_patches(self) -> int:
        rows, cols = self.grid
        return rows * cols

    @property
    def patch_dim(self) -> int:
        return 3 * self.patch_size**2

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def dino_s16(cls, image_height: int = 224, image_width: int = 224) -> "EncoderConfig":
        """First two blocks of a ViT-S/16 at the given input size."""
        return cls(image_height, image_width, 16, 384, 6, 2, 4)


PROFILES = {
    "desk": EncoderConfig(),
    "tiny": EncoderConfig(32, 32, 8, 32, 4, 2, 2),
    "dino-s16": EncoderConfig.dino_s16(),
}


def encoder_shapes(cfg: EncoderConfig) -> dict[str, tuple[int, ...]]:
    c, hidden = cfg.embed_dim, cfg.embed_dim * cfg.ffnn_ratio
    shapes = {
        "patch_embed.weight": (c, cfg.patch_dim),
        "patch_embed.bias": (c,),
        "cls_token": (c,),
        "pos_embed": (cfg.num_patches + 1, c),
    }
    for layer in range(cfg.num_layers):
        p = f"blocks.{layer}"
        shapes[f"{p}.norm1.weight"] = (c,)
        shapes[f"{p}.norm1.bias"] = (c,)
        shapes.update(attention_shapes(f"{p}.attn", c))
        shapes[f"{p}.norm2.weight"] = (c,)
        shapes[f"{p}.norm2.bias"] = (c,)
        shapes[f"{p}.mlp.fc1.weight"] = (hidden, c)
        shapes[f"{p}.mlp.fc1.bias"] = (hidden,)
        shapes[f"{p}.mlp.fc2.weight"] = (c, hidden)
        shapes[f"{p}.mlp.fc2.bias"] = (c,)
    return shapes


class EncoderWeights(ParameterSet):
    def __init__(self, config: EncoderConfig, tensors: dict[str, Tensor]):
        self.config = config
        super().__init__(tensors)

    def expected_shapes(self):
        return encoder_shapes(self.config)

    @classmethod
    def initialize(cls, config: EncoderConfig, rng: np.random.Generator) -> "EncoderWeights":
        c, hidden = config.embed_dim, config.embed_dim * config.ffnn_ratio
        arrays = {**init_linear(rng, "patch_embed", c, config.patch_dim)}
        arrays["cls_token"] = np.zeros(c)
        arrays["pos_embed"] = trunc_normal(rng, (config.num_patches + 1, c))
        for layer in range(config.num_layers):
            p = f"blocks.{layer}"
            arrays.update(init_norm(f"{p}.norm1", c))
            for part in ("q", "k", "v", "proj"):
                arrays.update(init_linear(rng, f"{p}.attn.{part}", c, c))
            arrays.update(init_norm(f"{p}.norm2", c))
            arrays.update(init_linear(rng, f"{p}.mlp.fc1", hidden, c))
            arrays.update(init_linear(rng, f"{p}.mlp.fc2", c, hidden))
        return cls(config, make_tensors(arrays))


def patchify(images: np.ndarray, patch_size: int) -> np.ndarray:
    """Split ``[..., H, W, 3]`` images into ``[..., N, P*P*3]`` patch rows.

    Patches are scanned left-to-right, top-to-bottom; each patch is
    flattened by row, then column, then channel.
    """
    *lead, h, w, ch = images.shape
    p = patch_size
    x = images.reshape(tuple(lead) + (h // p, p, w // p, p, ch))
    nl = len(lead)
    order = tuple(range(nl)) + (nl, nl + 2, nl + 1, nl + 3, nl + 4)
    return x.transpose(order).reshape(tuple(lead) + ((h // p) * (w // p), p * p * ch))


def embed_image(image: np.ndarray, w: EncoderWeights) -> Tensor:
    """Patch embedding + class token + position embeddings.

    Accepts one ``H x W x 3`` image or a batch ``B x H x W x 3`` and returns a
    token sequence of shape ``[(B,) N+1, C]``.
    """
    cfg = w.config
    image = np.asarray(image, dtype=np.float64)
    if image.ndim not in (3, 4) or image.shape[-3:] != (cfg.image_height, cfg.image_width, 3):
        raise ShapeError(
            f"image shape {image.shape} does not match encoder input {cfg.image_height}x{cfg.image_width}x3"
        )
    patches = Tensor(patchify(image, cfg.patch_size))
    tokens = linear(patches, w["patch_embed.weight"], w["patch_embed.bias"])
    return prepend_token(w["cls_token"], tokens) + w["pos_embed"]


def encoder_forward(seq: Tensor, w: EncoderWeights, return_attention: bool = False):
    """Pre-norm transformer layers: H' = MSA(LN(H)) + H; H = FFNN(LN(H')) + H'.

    With ``return_attention`` the per-layer attention probabilities are
    returned as a list next to the output sequence.
    """
    cfg = w.config
    if seq.shape[-2:] != (cfg.num_patches + 1, cfg.embed_dim):
        raise ShapeError(f"token sequence {seq.shape} does not fit encoder config")
    attentions = []
    h = seq
    for layer in range(cfg.num_layers):
        p = f"blocks.{layer}"
        normed = layer_norm(h, w[f"{p}.norm1.weight"], w[f"{p}.norm1.bias"], cfg.ln_eps)
        attn_out, probs = multi_head_attention(normed, normed, w, f"{p}.attn", cfg.num_heads)
        h = attn_out + h
        normed = layer_norm(h, w[f"{p}.norm2.weight"], w[f"{p}.norm2.bias"], cfg.ln_eps)
        hidden = gelu(linear(normed, w[f"{p}.mlp.fc1.weight"], w[f"{p}.mlp.fc1.bias"]))
        h = linear(hidden, w[f"{p}.mlp.fc2.weight"], w[f"{p}.mlp.fc2.bias"]) + h
        attentions.append(probs.data)
    if return_attention:
        return h, attentions
    return h


def encode(image: np.ndarray, w: EncoderWeights, return_attention: bool = False):
    return encoder_forward(embed_image(image, w), w, return_attention=return_attention)


def shift_representation(f_s: Tensor, f_ref: Tensor) -> Tensor:
    """Per-token absolute difference |f_s - f_ref|, class token included."""
    if f_s.shape != f_ref.shape:
        raise ShapeError(f"shift_representation: shapes {f_s.shape} and {f_ref.shape} differ")
    return tensor_abs(sub(f_s, f_ref))


def load_weights(path, config: EncoderConfig) -> EncoderWeights:
    """Read one encoder's tensors from an ARWT weight file."""
    from .weights_io import read_weights

    return EncoderWeights(config, make_tensors(read_weights(path)))


def save_weights(path, weights: EncoderWeights) -> None:
    from .weights_io import write_weights

    write_weights(path, weights.arrays())
