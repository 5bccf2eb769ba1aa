"""Full TransformAR / -KD / -KD+ model wiring."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .autodiff import Tensor, no_grad
from .decoder import SKIP_SOURCES, DecoderWeights, decode, select_tokens
from .encoder import EncoderConfig, EncoderWeights, encode, shift_representation
from .errors import ConfigError
from .heads import AR_CLASSES, BACKGROUND_CLASSES, ProjectionHead, alignment_loss, classification_loss, project_head
from .scoring import (
    VARIANTS,
    LossConfig,
    RegressorWeights,
    aggregate_pmos,
    elastic_net_penalty,
    huber_loss,
    mse_loss,
    regress_and_pool,
    total_loss,
)

OBJECTIVES = ("huber", "mse")


@dataclass(frozen=True)
class ModelConfig:
    variant: str = "kd"
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    use_decoder: bool = True
    use_shift: bool = True
    decoder_skip: str = "shift"
    objective: str = "huber"
    ce_reduction: str = "mean"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.decoder_skip not in SKIP_SOURCES:
            raise ConfigError(f"decoder_skip must be one of {SKIP_SOURCES}, got {self.decoder_skip!r}")
        if self.objective not in OBJECTIVES:
            raise ConfigError(f"objective must be one of {OBJECTIVES}, got {self.objective!r}")
        if self.ce_reduction not in ("mean", "sum"):
            raise ConfigError(f"ce_reduction must be 'mean' or 'sum', got {self.ce_reduction!r}")

    @property
    def distill(self) -> bool:
        return self.variant != "base"

    @property
    def include_class_token(self) -> bool:
        return self.variant == "kd_plus"

    @property
    def num_quality_tokens(self) -> int:
        return self.encoder.num_patches + (1 if self.include_class_token else 0)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        d["encoder"] = EncoderConfig(**d.get("encoder", {}))
        d["loss"] = LossConfig(**d.get("loss", {}))
        return cls(**d)

    def with_(self, **changes) -> "ModelConfig":
        return replace(self, **changes)


@dataclass
class ModelOutput:
    pmos: Tensor
    s_as: Tensor
    s_bs: Tensor
    f_s_cls: Tensor
    logits_a: Tensor | None = None
    logits_b: Tensor | None = None
    f_hat_a: Tensor | None = None
    f_hat_b: Tensor | None = None
    attention: dict = field(default_factory=dict)


ENCODER_KEYS = ("a", "b", "s")
BRANCHES = ("as", "bs")


class TransformAR:
    """Three content encoders, two quality decoders, two regressors and (KD) two heads."""

    def __init__(self, config: ModelConfig, encoders: dict, decoders: dict, regressors: dict, heads: dict):
        self.config = config
        self.encoders = encoders
        self.decoders = decoders
        self.regressors = regressors
        self.heads = heads
        frozen = not config.distill
        for enc in encoders.values():
            enc.requires_grad_(not frozen)

    @classmethod
    def initialize(cls, config: ModelConfig, rng: np.random.Generator,
                   encoder_weights: EncoderWeights | None = None) -> "TransformAR":
        ecfg = config.encoder
        if encoder_weights is None:
            encoder_weights = EncoderWeights.initialize(ecfg, rng)
        elif encoder_weights.config != ecfg:
            raise ConfigError("supplied encoder weights were built for a different encoder config")
        encoders = {k: encoder_weights.copy() for k in ENCODER_KEYS}
        decoders = {}
        if config.use_decoder:
            decoders = {
                b: DecoderWeights.initialize(ecfg.embed_dim, ecfg.num_heads, rng, ecfg.ffnn_ratio, ecfg.ln_eps)
                for b in BRANCHES
            }
        regressors = {b: RegressorWeights.initialize(ecfg.embed_dim, config.num_quality_tokens, rng) for b in BRANCHES}
        heads = {}
        if config.distill:
            heads = {
                "a": ProjectionHead.initialize(ecfg.embed_dim, len(AR_CLASSES), rng),
                "b": ProjectionHead.initialize(ecfg.embed_dim, len(BACKGROUND_CLASSES), rng),
            }
        return cls(config, encoders, decoders, regressors, heads)

    # parameters ---------------------------------------------------------------

    def modules(self) -> dict[str, object]:
        out = {}
        out.update({f"encoder_{k}": v for k, v in self.encoders.items()})
        out.update({f"decoder_{k}": v for k, v in self.decoders.items()})
        out.update({f"regressor_{k}": v for k, v in self.regressors.items()})
        out.update({f"head_{k}": v for k, v in self.heads.items()})
        return out

    def named_parameters(self) -> dict[str, Tensor]:
        named = {}
        for prefix, module in self.modules().items():
            for name, t in module.items():
                named[f"{prefix}.{name}"] = t
        return named

    def encoder_parameters(self) -> list[Tensor]:
        return [t for enc in self.encoders.values() for t in enc.parameters()]

    def regressor_parameters(self, include_bias: bool = True) -> list[Tensor]:
        return [t for reg in self.regressors.values() for name, t in reg.items()
                if include_bias or not name.endswith(".bias")]

    def parameter_groups(self) -> dict[str, list[Tensor]]:
        """Trainable parameters split by learning-rate group.

        Frozen (base-variant) encoders appear in no group at all.
        """
        main = [t for prefix, m in self.modules().items() if not prefix.startswith("encoder_")
                for t in m.parameters()]
        groups = {"main": main}
        if self.config.distill:
            groups["encoder"] = self.encoder_parameters()
        return groups

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {n: t.data.copy() for n, t in self.named_parameters().items()}

    def load_state_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        named = self.named_parameters()
        missing = sorted(set(named) - set(arrays))
        if missing:
            from .errors import MissingTensorError

            raise MissingTensorError(f"missing tensors: {', '.join(missing)}")
        for name, t in named.items():
            if arrays[name].shape != t.shape:
                from .errors import WeightShapeError

                raise WeightShapeError(f"tensor {name!r} has shape {arrays[name].shape}, expected {t.shape}")
            t.data = np.array(arrays[name], dtype=np.float64)

    # forward ------------------------------------------------------------------

    def forward(self, fg: np.ndarray, bg: np.ndarray, sup: np.ndarray, return_attention: bool = False) -> ModelOutput:
        cfg = self.config
        attention = {}

        def run(key, image):
            if return_attention:
                seq, attn = encode(image, self.encoders[key], return_attention=True)
                attention[f"encoder_{key}"] = attn
                return seq
            return encode(image, self.encoders[key])

        f_a, f_b, f_s = run("a", fg), run("b", bg), run("s", sup)
        refs = {"as": f_a, "bs": f_b}
        scores = {}
        for branch, f_ref in refs.items():
            d = shift_representation(f_s, f_ref) if cfg.use_shift else f_s
            if cfg.use_decoder:
                g, probs = decode(f_ref, d, self.decoders[branch], include_class_token=cfg.include_class_token,
                                  skip_source=cfg.decoder_skip, return_attention=True)
                attention[f"decoder_{branch}"] = probs
            else:
                g = select_tokens(d, cfg.include_class_token)
            scores[branch] = regress_and_pool(g, self.regressors[branch])
        pmos = aggregate_pmos(scores["as"], scores["bs"], cfg.loss.zeta)
        out = ModelOutput(pmos=pmos, s_as=scores["as"], s_bs=scores["bs"], f_s_cls=f_s[..., 0, :],
                          attention=attention)
        if cfg.distill:
            out.logits_a, out.f_hat_a = project_head(f_a[..., 0, :], self.heads["a"])
            out.logits_b, out.f_hat_b = project_head(f_b[..., 0, :], self.heads["b"])
        return out

    def losses(self, out: ModelOutput, targets, fg_labels=None, bg_labels=None) -> dict[str, Tensor]:
        """Every objective term plus ``total`` for one forward pass."""
        cfg = self.config
        if cfg.objective == "huber":
            l_h = huber_loss(targets, out.pmos, cfg.loss.delta)
        else:
            l_h = mse_loss(targets, out.pmos)
        l_r = elastic_net_penalty(self.regressor_parameters(include_bias=False), cfg.loss.alpha)
        terms = {"quality": l_h, "reg": l_r}
        l_ncs = l_ce = None
        if cfg.distill:
            if fg_labels is None or bg_labels is None:
                raise ConfigError("distillation variants need foreground and background class labels")
            l_ncs = alignment_loss(out.f_s_cls, out.f_hat_a, out.f_hat_b)
            l_ce = classification_loss(fg_labels, out.logits_a, bg_labels, out.logits_b, cfg.ce_reduction)
            terms["ncs"] = l_ncs
            terms["ce"] = l_ce
        terms["total"] = total_loss(l_h, l_ncs, l_ce, l_r, cfg.loss, cfg.variant)
        return terms

    def predict(self, fg: np.ndarray, bg: np.ndarray, sup: np.ndarray, batch_size: int = 32) -> np.ndarray:
        """pMOS for a stack of triplets, without recording a graph."""
        preds = []
        with no_grad():
            for lo in range(0, len(fg), batch_size):
                hi = lo + batch_size
                preds.append(np.atleast_1d(self.forward(fg[lo:hi], bg[lo:hi], sup[lo:hi]).pmos.data))
        return np.concatenate(preds) if preds else np.zeros(0)
