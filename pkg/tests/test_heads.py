"""Projection heads, classification loss and stop-gradient alignment."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from transformar.autodiff import Tensor, backward, check_gradients
from transformar.errors import ConfigError, DegenerateInputError
from transformar.heads import (
    AR_CLASSES,
    BACKGROUND_CLASSES,
    ProjectionHead,
    alignment_loss,
    classification_loss,
    cross_entropy,
    negative_cosine,
    project_head,
)

C = 6


def head(k, scale=None, seed=0):
    h = ProjectionHead.initialize(C, k, np.random.default_rng(seed))
    if scale is not None:
        rng = np.random.default_rng(seed + 1)
        for t in h.parameters():
            t.data = rng.normal(size=t.shape) * scale
    return h


def np_gelu(x):
    return 0.5 * x * (1 + np.tanh(np.sqrt(2 / np.pi) * (x + 0.044715 * x**3)))


class TestProjectionHead:
    def test_zero_weights(self):
        h = head(3, scale=0.0)
        logits, f_hat = project_head(Tensor(np.ones(C)), h)
        assert not np.any(logits.data) and not np.any(f_hat.data)

    def test_class_counts(self):
        assert len(AR_CLASSES) == 3 and len(BACKGROUND_CLASSES) == 2
        x = Tensor(np.ones((4, C)))
        assert project_head(x, head(3))[0].shape == (4, 3)
        assert project_head(x, head(2))[0].shape == (4, 2)
        assert project_head(x, head(2))[1].shape == (4, C)

    def test_hidden_width_doubles(self):
        assert head(3)["fc1.weight"].shape == (2 * C, C)

    def test_straight_line(self):
        h = head(3, scale=0.5)
        a = {n: t.data for n, t in h.items()}
        x = np.random.default_rng(2).normal(size=(2, C))
        f_hat = np_gelu(x @ a["fc1.weight"].T + a["fc1.bias"]) @ a["fc2.weight"].T + a["fc2.bias"]
        logits = np_gelu(f_hat) @ a["logits.weight"].T + a["logits.bias"]
        got_logits, got_f = project_head(Tensor(x), h)
        np.testing.assert_allclose(got_f.data, f_hat, atol=1e-12)
        np.testing.assert_allclose(got_logits.data, logits, atol=1e-12)


class TestClassification:
    def test_uniform_three_way(self):
        assert float(cross_entropy([1], Tensor(np.zeros((1, 3)))).data) == pytest.approx(np.log(3), abs=1e-12)

    def test_saturated(self):
        logits = Tensor(np.array([[50.0, 0.0, 0.0]]))
        assert float(cross_entropy([0], logits).data) < 1e-20

    def test_both_uniform(self):
        loss = classification_loss([0, 2], Tensor(np.zeros((2, 3))), [1, 0], Tensor(np.zeros((2, 2))))
        assert float(loss.data) == pytest.approx(0.5 * np.log(3) + 0.5 * np.log(2), abs=1e-12)
        assert float(loss.data) == pytest.approx(0.8959, abs=1e-4)

    def test_sum_reduction(self):
        z = Tensor(np.zeros((4, 3)))
        assert float(cross_entropy([0, 1, 2, 0], z, "sum").data) == pytest.approx(4 * np.log(3))

    def test_bad_index(self):
        with pytest.raises(ConfigError):
            cross_entropy([3], Tensor(np.zeros((1, 3))))
        with pytest.raises(ConfigError):
            cross_entropy([-1], Tensor(np.zeros((1, 3))))

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_non_negative(self, seed):
        rng = np.random.default_rng(seed)
        z = Tensor(rng.normal(size=(3, 3)) * 5)
        assert float(cross_entropy(rng.integers(0, 3, 3), z).data) >= 0


class TestAlignment:
    def test_perfect_alignment(self):
        v = Tensor(np.array([1.0, 2.0, -1.0, 0.5, 0.0, 3.0]))
        assert float(alignment_loss(v, v, v).data) == pytest.approx(-2.0, abs=1e-12)

    def test_orthogonal(self):
        p = Tensor(np.eye(C)[0])
        assert float(alignment_loss(p, Tensor(np.eye(C)[1]), Tensor(np.eye(C)[2])).data) == pytest.approx(0.0)

    def test_zero_norm_rejected(self):
        with pytest.raises(DegenerateInputError):
            negative_cosine(Tensor(np.zeros(C)), Tensor(np.ones(C)))
        with pytest.raises(DegenerateInputError):
            negative_cosine(Tensor(np.ones(C)), Tensor(np.zeros(C)))

    def test_teacher_gets_no_gradient(self):
        rng = np.random.default_rng(3)
        s = Tensor(rng.normal(size=(2, C)), requires_grad=True)
        a = Tensor(rng.normal(size=(2, C)), requires_grad=True)
        b = Tensor(rng.normal(size=(2, C)), requires_grad=True)
        backward(alignment_loss(s, a, b))
        assert a.grad is None and b.grad is None
        assert np.any(s.grad)

    def test_student_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(4)
        s = Tensor(rng.normal(size=(3, C)), requires_grad=True)
        a, b = Tensor(rng.normal(size=(3, C))), Tensor(rng.normal(size=(3, C)))
        assert check_gradients(lambda: alignment_loss(s, a, b), [s]).max_error < 1e-6

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 2**31 - 1), st.floats(1e-3, 1e3))
    def test_bounded_and_scale_invariant(self, seed, c):
        rng = np.random.default_rng(seed)
        p, za, zb = (rng.normal(size=C) for _ in range(3))
        base = float(alignment_loss(Tensor(p), Tensor(za), Tensor(zb)).data)
        scaled = float(alignment_loss(Tensor(c * p), Tensor(za), Tensor(zb)).data)
        assert -2.0 - 1e-12 <= base <= 2.0 + 1e-12
        assert scaled == pytest.approx(base, abs=1e-12)
