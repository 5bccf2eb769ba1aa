"""Finite-difference checks over every differentiable operation and the model loss.

Each check builds seeded random inputs, defines a scalar function of them and
compares analytic against central-difference gradients. Inputs to kinked
functions (abs, Huber) are kept away from the kinks.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .attention import attention_shapes, multi_head_attention
from .autodiff import Tensor, check_gradients
from .decoder import DecoderWeights, decode
from .encoder import EncoderConfig, encode, shift_representation
from .heads import ProjectionHead, alignment_loss, classification_loss, cross_entropy, negative_cosine, project_head
from .model import ModelConfig, TransformAR
from .params import make_tensors
from .scoring import LossConfig, RegressorWeights, elastic_net_penalty, huber_loss, mse_loss, regress_and_pool


@dataclass
class SuiteEntry:
    name: str
    max_error: float
    seconds: float

    def passed(self, tol: float = 1e-3) -> bool:
        return self.max_error < tol


def _t(rng, *shape, scale=1.0, away_from_zero=False):
    x = rng.normal(size=shape) * scale
    if away_from_zero:
        x = np.where(np.abs(x) < 0.1, np.sign(x + 1e-12) * 0.1 + x, x)
    return Tensor(x, requires_grad=True)


def _project(out_fn, rng):
    """Scalar function ``sum(out_fn() * W)`` with fixed random ``W``."""
    with ad.no_grad():
        shape = out_fn().shape
    w = Tensor(rng.normal(size=shape))
    return lambda: ad.tensor_sum(ad.mul(out_fn(), w))


def _op_checks():
    """(name, builder) pairs; a builder maps an rng to (scalar fn, inputs)."""

    def unary(op, shape=(3, 4), positive=False, **kw):
        def build(rng):
            x = Tensor(rng.uniform(0.5, 2.0, size=shape), requires_grad=True) if positive else _t(rng, *shape, **kw)
            return _project(lambda: op(x), rng), [x]
        return build

    def binary(op, bshape=(3, 4)):
        def build(rng):
            a, b = _t(rng, 2, 3, 4), _t(rng, *bshape)
            return _project(lambda: op(a, b), rng), [a, b]
        return build

    def many(op, *shapes):
        def build(rng):
            xs = [_t(rng, *s) for s in shapes]
            return _project(lambda: op(*xs), rng), xs
        return build

    x3 = (2, 3, 4)
    return [
        ("add", binary(ad.add)),
        ("add_broadcast", binary(ad.add, (4,))),
        ("sub", binary(ad.sub)),
        ("mul", binary(ad.mul)),
        ("mul_broadcast", binary(ad.mul, (4,))),
        ("neg", unary(ad.neg)),
        ("scalar_arithmetic", unary(lambda x: (x * 2.5 - 1.0) / 3.0 + 0.5)),
        ("square", unary(ad.square)),
        ("abs", unary(ad.tensor_abs, away_from_zero=True)),
        ("exp", unary(ad.exp, scale=0.5)),
        ("log", unary(ad.log, positive=True)),
        ("sqrt", unary(ad.sqrt, positive=True)),
        ("tanh", unary(ad.tanh)),
        ("gelu", unary(ad.gelu)),
        ("sum", unary(lambda x: ad.tensor_sum(x, axis=1), x3)),
        ("mean", unary(lambda x: ad.mean(x, axis=-1), x3)),
        ("matmul_batched", many(ad.matmul, (2, 3, 4), (2, 4, 5))),
        ("matmul_shared", many(ad.matmul, (2, 3, 4), (4, 5))),
        ("linear", many(ad.linear, (2, 3, 4), (5, 4), (5,))),
        ("reshape", unary(lambda x: ad.reshape(x, (6, 4)), x3)),
        ("permute", unary(lambda x: ad.permute(x, (2, 0, 1)), x3)),
        ("transpose", unary(ad.transpose, x3)),
        ("take", unary(lambda x: ad.take(x, (slice(None), np.array([0, 2, 2]))), x3)),
        ("concat", many(lambda a, b: ad.concat([a, b], axis=-1), (2, 3), (2, 2))),
        ("prepend_token", many(ad.prepend_token, (4,), x3)),
        ("softmax", unary(lambda x: ad.softmax(x, axis=-1), x3)),
        ("log_softmax", unary(lambda x: ad.log_softmax(x, axis=-1), x3)),
        ("layer_norm", many(ad.layer_norm, (2, 3, 5), (5,), (5,))),
        ("l2_normalize", unary(lambda x: ad.l2_normalize(x, axis=-1), x3)),
    ]


SMALL_ENCODER = EncoderConfig(16, 16, 8, 8, 2, 2, 2)


def _module_checks():
    ecfg = SMALL_ENCODER
    c = ecfg.embed_dim

    def attention(rng):
        shapes = attention_shapes("attn", c)
        params = make_tensors({k: rng.normal(size=s) * 0.3 for k, s in shapes.items()})
        xq, xc = _t(rng, 2, 3, c), _t(rng, 2, 5, c)
        w = rng.normal(size=(2, 3, c))

        def fn():
            out, _ = multi_head_attention(xq, xc, params, "attn", ecfg.num_heads)
            return ad.tensor_sum(ad.mul(out, Tensor(w)))

        return fn, [xq, xc] + list(params.values())

    def encoder(rng):
        from .encoder import EncoderWeights

        enc = EncoderWeights.initialize(ecfg, rng)
        for t in enc.parameters():
            t.data = rng.normal(size=t.shape) * 0.3
        enc.requires_grad_(True)
        img = rng.uniform(size=(2, 16, 16, 3))
        w = rng.normal(size=(2, ecfg.num_patches + 1, c))
        return (lambda: ad.tensor_sum(ad.mul(encode(img, enc), Tensor(w)))), enc.parameters()

    def shift(rng):
        a, b = _t(rng, 2, 3, c), _t(rng, 2, 3, c)
        b.data = a.data + np.where(rng.uniform(size=a.shape) < 0.5, -1, 1) * rng.uniform(0.2, 1.0, size=a.shape)
        w = rng.normal(size=a.shape)
        return (lambda: ad.tensor_sum(ad.mul(shift_representation(a, b), Tensor(w)))), [a, b]

    def decoder(rng):
        dec = DecoderWeights.initialize(c, ecfg.num_heads, rng, ecfg.ffnn_ratio)
        for t in dec.parameters():
            t.data = rng.normal(size=t.shape) * 0.3
        dec.requires_grad_(True)
        f_ref, d = _t(rng, 2, 5, c), _t(rng, 2, 5, c)
        w = rng.normal(size=(2, 5, c))

        def fn():
            return ad.tensor_sum(ad.mul(decode(f_ref, d, dec, include_class_token=True), Tensor(w)))

        return fn, [f_ref, d] + dec.parameters()

    def head_ce(rng):
        head = ProjectionHead.initialize(c, 3, rng)
        for t in head.parameters():
            t.data = rng.normal(size=t.shape) * 0.3
        head.requires_grad_(True)
        x = _t(rng, 4, c)
        labels = np.array([0, 2, 1, 2])

        def fn():
            logits, f_hat = project_head(x, head)
            return cross_entropy(labels, logits) + ad.tensor_sum(ad.square(f_hat)) * 0.1

        return fn, [x] + head.parameters()

    def classification(rng):
        za, zb = _t(rng, 4, 3), _t(rng, 4, 2)
        return (lambda: classification_loss(np.array([0, 1, 2, 0]), za, np.array([1, 0, 0, 1]), zb,
                                            reduction="sum")), [za, zb]

    def ncs(rng):
        s, a, b = _t(rng, 4, c), _t(rng, 4, c), _t(rng, 4, c)
        # a and b are stop-gradient targets: only the student input is probed
        return (lambda: negative_cosine(s, a) + alignment_loss(s, a, b)), [s]

    def regressor(rng):
        reg = RegressorWeights.initialize(c, 5, rng)
        reg.requires_grad_(True)
        g = _t(rng, 3, 5, c)
        w = rng.normal(size=3)
        return (lambda: ad.tensor_sum(ad.mul(regress_and_pool(g, reg), Tensor(w)))), [g] + reg.parameters()

    def huber(rng):
        q = rng.normal(size=8) * 2
        # residuals well inside and outside |e| = delta
        offsets = np.array([0.3, -0.4, 0.2, -0.1, 2.5, -3.0, 1.8, -2.2])
        q_hat = Tensor(q + offsets, requires_grad=True)
        return (lambda: huber_loss(q, q_hat, 1.0)), [q_hat]

    def mse(rng):
        q_hat = _t(rng, 6)
        q = rng.normal(size=6)
        return (lambda: mse_loss(q, q_hat)), [q_hat]

    def elastic(rng):
        ps = [_t(rng, 3, 4, away_from_zero=True), _t(rng, 5, away_from_zero=True)]
        return (lambda: elastic_net_penalty(ps, 0.7)), ps

    return [
        ("multi_head_attention", attention), ("encoder", encoder), ("shift_representation", shift),
        ("decoder", decoder), ("projection_head_ce", head_ce), ("classification_loss", classification),
        ("negative_cosine", ncs), ("regressor_pool", regressor), ("huber", huber), ("mse", mse),
        ("elastic_net", elastic),
    ]


TEACHER_PREFIXES = ("encoder_a.", "encoder_b.", "head_")


def composite_check(variant: str = "kd_plus", seed: int = 0, side: str = "student"):
    """Full model loss against every parameter tensor of one side of the model.

    The alignment target passes through a stop-gradient, so finite
    differences only agree with backprop for parameters that do not feed
    that target. ``side="student"`` checks the complete four-term loss
    against the superimposed-image encoder, decoders and regressors;
    ``side="teacher"`` checks the reference encoders and projection heads
    with the alignment weight set to zero.
    """
    rng = np.random.default_rng(seed)
    loss = LossConfig() if side == "student" else LossConfig(lambda1=0.0)
    cfg = ModelConfig(variant=variant, encoder=SMALL_ENCODER, loss=loss)
    model = TransformAR.initialize(cfg, rng)
    named = model.named_parameters()
    for t in named.values():
        # larger weights than the default init so every path carries signal
        t.data = t.data + rng.normal(size=t.shape) * 0.2
        t.requires_grad = True
    b = 2
    fg, bg = rng.uniform(size=(b, 16, 16, 3)), rng.uniform(size=(b, 16, 16, 3))
    sup = 0.6 * fg + 0.4 * bg
    mos = rng.uniform(0, 1, size=b)
    fl, bl = np.array([0, 2]), np.array([1, 0])

    def fn():
        out = model.forward(fg, bg, sup)
        return model.losses(out, mos, fl, bl)["total"]

    teacher = [t for n, t in named.items() if n.startswith(TEACHER_PREFIXES)]
    student = [t for n, t in named.items() if not n.startswith(TEACHER_PREFIXES)]
    return fn, (student if side == "student" else teacher)


COMPOSITE_CASES = (("base", "student"), ("base", "teacher"), ("kd", "student"), ("kd", "teacher"),
                   ("kd_plus", "student"), ("kd_plus", "teacher"))


def run_suite(seed: int = 0, h: float = 1e-5, include_composite: bool = True, max_entries: int = 2) -> list[SuiteEntry]:
    """Run every check; whole-model checks probe ``max_entries`` entries per tensor."""
    results = []
    for name, build in _op_checks() + _module_checks():
        rng = np.random.default_rng(seed)
        start = time.perf_counter()
        fn, inputs = build(rng)
        res = check_gradients(fn, inputs, h=h, max_entries=8, rng=np.random.default_rng(seed))
        results.append(SuiteEntry(name, res.max_error, time.perf_counter() - start))
    if include_composite:
        for variant, side in COMPOSITE_CASES:
            start = time.perf_counter()
            fn, inputs = composite_check(variant, seed, side)
            res = check_gradients(fn, inputs, h=h, max_entries=max_entries, rng=np.random.default_rng(seed))
            results.append(SuiteEntry(f"total_loss_{variant}_{side}", res.max_error, time.perf_counter() - start))
    return results
