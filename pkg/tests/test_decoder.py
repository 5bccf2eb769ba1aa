"""Cross-attention quality decoder."""

import numpy as np
import pytest

from transformar.autodiff import Tensor
from transformar.decoder import DecoderWeights, cross_attention, decode
from transformar.errors import ConfigError, ShapeError

C, HEADS = 4, 2


def dec(seed=0, scale=None):
    w = DecoderWeights.initialize(C, HEADS, np.random.default_rng(seed), ffnn_ratio=2)
    if scale is not None:
        rng = np.random.default_rng(seed + 100)
        for t in w.parameters():
            t.data = rng.normal(size=t.shape) * scale
    return w


def np_ln(x, g, b, eps=1e-6):
    mu = x.mean(-1, keepdims=True)
    var = ((x - mu) ** 2).mean(-1, keepdims=True)
    return (x - mu) / np.sqrt(var + eps) * g + b


def np_gelu(x):
    return 0.5 * x * (1 + np.tanh(np.sqrt(2 / np.pi) * (x + 0.044715 * x**3)))


def np_decode(f, d, w):
    """Straight-line reference: one head at a time, explicit softmax."""
    a = {n: t.data for n, t in w.items()}
    q_in = np_ln(f, a["norm_q.weight"], a["norm_q.bias"])
    kv_in = np_ln(d, a["norm_kv.weight"], a["norm_kv.bias"])
    q = q_in @ a["cross_attn.q.weight"].T + a["cross_attn.q.bias"]
    k = kv_in @ a["cross_attn.k.weight"].T + a["cross_attn.k.bias"]
    v = kv_in @ a["cross_attn.v.weight"].T + a["cross_attn.v.bias"]
    hd = C // HEADS
    heads = []
    for h in range(HEADS):
        sl = slice(h * hd, (h + 1) * hd)
        s = q[:, sl] @ k[:, sl].T / np.sqrt(hd)
        p = np.exp(s - s.max(-1, keepdims=True))
        p /= p.sum(-1, keepdims=True)
        heads.append(p @ v[:, sl])
    ca = np.concatenate(heads, -1) @ a["cross_attn.proj.weight"].T + a["cross_attn.proj.bias"]
    x = ca + d
    hidden = np_gelu(np_ln(x, a["norm_ffn.weight"], a["norm_ffn.bias"]) @ a["mlp.fc1.weight"].T + a["mlp.fc1.bias"])
    return hidden @ a["mlp.fc2.weight"].T + a["mlp.fc2.bias"] + x


class TestCrossAttention:
    def test_identical_values_ignore_queries(self):
        w = dec(scale=0.7)
        u = np.random.default_rng(1).normal(size=C)
        d = Tensor(np.tile(u, (5, 1)))
        out1 = cross_attention(Tensor(np.random.default_rng(2).normal(size=(5, C))), d, w).data
        out2 = cross_attention(Tensor(np.random.default_rng(3).normal(size=(5, C))), d, w).data
        np.testing.assert_allclose(out1, out2, atol=1e-12)
        np.testing.assert_allclose(out1, np.tile(out1[0], (5, 1)), atol=1e-12)

    def test_zero_shift_zero_output(self):
        w = dec()
        for name in ("cross_attn.k.bias", "cross_attn.v.bias", "cross_attn.proj.bias", "norm_kv.bias"):
            w[name].data[:] = 0.0
        f = Tensor(np.random.default_rng(4).normal(size=(5, C)))
        out, probs = cross_attention(f, Tensor(np.zeros((5, C))), w, return_attention=True)
        np.testing.assert_allclose(probs, 1 / 5, atol=1e-15)
        np.testing.assert_allclose(out.data, 0.0, atol=1e-15)

    def test_probabilities(self):
        w = dec(scale=1.0)
        rng = np.random.default_rng(5)
        _, probs = cross_attention(Tensor(rng.normal(size=(2, 6, C))), Tensor(rng.normal(size=(2, 6, C))), w,
                                   return_attention=True)
        assert probs.shape == (2, HEADS, 6, 6)
        assert np.all(probs >= 0)
        np.testing.assert_allclose(probs.sum(-1), 1.0, atol=1e-9)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            cross_attention(Tensor(np.zeros((5, C))), Tensor(np.zeros((4, C))), dec())


class TestDecode:
    def test_zero_everything(self):
        w = dec()
        for name, t in w.items():
            if name.startswith(("cross_attn", "mlp")):
                t.data[:] = 0.0
        f = Tensor(np.random.default_rng(6).normal(size=(5, C)))
        out = decode(f, Tensor(np.zeros((5, C))), w)
        np.testing.assert_array_equal(out.data, np.zeros((4, C)))

    def test_token_counts(self):
        rng = np.random.default_rng(7)
        f, d = Tensor(rng.normal(size=(2, 5, C))), Tensor(rng.normal(size=(2, 5, C)))
        assert decode(f, d, dec()).shape == (2, 4, C)
        assert decode(f, d, dec(), include_class_token=True).shape == (2, 5, C)

    def test_matches_straight_line_oracle(self):
        w = dec(scale=0.6)
        rng = np.random.default_rng(8)
        f, d = rng.normal(size=(3, C)), rng.normal(size=(3, C))
        out = decode(Tensor(f), Tensor(d), w, include_class_token=True).data
        np.testing.assert_allclose(out, np_decode(f, d, w), atol=1e-12)

    def test_class_token_excluded_by_default(self):
        w = dec(scale=0.6)
        rng = np.random.default_rng(9)
        f, d = rng.normal(size=(4, C)), rng.normal(size=(4, C))
        out = decode(Tensor(f), Tensor(d), w).data
        np.testing.assert_allclose(out, np_decode(f[1:], d[1:], w), atol=1e-12)

    def test_query_skip_toggle(self):
        w = dec(scale=0.6)
        rng = np.random.default_rng(10)
        f, d = Tensor(rng.normal(size=(4, C))), Tensor(rng.normal(size=(4, C)))
        a = decode(f, d, w).data
        b = decode(f, d, w, skip_source="query").data
        assert not np.allclose(a, b)
        with pytest.raises(ConfigError):
            decode(f, d, w, skip_source="both")

    def test_deterministic(self):
        w = dec(scale=0.6)
        rng = np.random.default_rng(11)
        f, d = Tensor(rng.normal(size=(4, C))), Tensor(rng.normal(size=(4, C)))
        np.testing.assert_array_equal(decode(f, d, w).data, decode(f, d, w).data)
