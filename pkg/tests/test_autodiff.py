"""Reverse-mode autodiff: forward values, gradient rules and graph mechanics."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from transformar import autodiff as ad
from transformar.autodiff import Tensor, backward, check_gradients
from transformar.errors import BackwardError, ShapeError


def param(x):
    return Tensor(np.asarray(x, dtype=np.float64), requires_grad=True)


def triple_loop_matmul(a, b):
    m, k = a.shape
    _, n = b.shape
    out = np.zeros((m, n))
    for i in range(m):
        for j in range(n):
            for p in range(k):
                out[i, j] += a[i, p] * b[p, j]
    return out


class TestMatmul:
    def test_identity(self):
        out = ad.matmul(Tensor(np.eye(2)), Tensor([[1.0, 2.0], [3.0, 4.0]]))
        np.testing.assert_array_equal(out.data, [[1, 2], [3, 4]])

    def test_row_times_column(self):
        out = ad.matmul(Tensor([[1.0, 0.0]]), Tensor([[0.0], [5.0]]))
        np.testing.assert_array_equal(out.data, [[0.0]])

    def test_matches_triple_loop(self):
        rng = np.random.default_rng(3)
        a, b = rng.normal(size=(3, 4)), rng.normal(size=(4, 2))
        np.testing.assert_allclose(ad.matmul(Tensor(a), Tensor(b)).data, triple_loop_matmul(a, b), atol=1e-12, rtol=0)

    def test_shape_error_names_both_shapes(self):
        with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 3\)"):
            ad.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))

    def test_gradient_rule(self):
        """d a = g b^T and d b = a^T g."""
        rng = np.random.default_rng(0)
        a, b = param(rng.normal(size=(3, 4))), param(rng.normal(size=(4, 2)))
        g = rng.normal(size=(3, 2))
        backward(ad.tensor_sum(ad.mul(ad.matmul(a, b), Tensor(g))))
        np.testing.assert_allclose(a.grad, g @ b.data.T, atol=1e-12)
        np.testing.assert_allclose(b.grad, a.data.T @ g, atol=1e-12)


class TestSoftmax:
    def test_uniform(self):
        np.testing.assert_allclose(ad.softmax(Tensor([0.0, 0.0, 0.0])).data, [1 / 3] * 3, atol=1e-15)

    def test_large_logits_do_not_overflow(self):
        with np.errstate(over="raise"):
            out = ad.softmax(Tensor([1000.0, 1000.0])).data
        np.testing.assert_allclose(out, [0.5, 0.5])

    def test_closed_form(self):
        np.testing.assert_allclose(ad.softmax(Tensor([0.0, np.log(3.0)])).data, [0.25, 0.75], atol=1e-15)

    @settings(max_examples=60, deadline=None)
    @given(arrays(np.float64, st.tuples(st.integers(1, 4), st.integers(1, 6)),
                  elements=st.floats(-50, 50, allow_nan=False)))
    def test_rows_are_distributions(self, x):
        out = ad.softmax(Tensor(x), axis=-1).data
        assert np.all(out >= 0)
        np.testing.assert_allclose(out.sum(axis=-1), 1.0, atol=1e-9)

    def test_log_softmax_consistent(self):
        x = np.random.default_rng(1).normal(size=(2, 5))
        np.testing.assert_allclose(np.exp(ad.log_softmax(Tensor(x)).data), ad.softmax(Tensor(x)).data, atol=1e-14)


class TestLayerNorm:
    ones, zeros = Tensor(np.ones(4)), Tensor(np.zeros(4))

    def test_constant_token(self):
        out = ad.layer_norm(Tensor([5.0, 5.0, 5.0, 5.0]), self.ones, self.zeros)
        np.testing.assert_array_equal(out.data, np.zeros(4))

    def test_two_values(self):
        out = ad.layer_norm(Tensor([1.0, -1.0]), Tensor(np.ones(2)), Tensor(np.zeros(2)), eps=1e-12)
        np.testing.assert_allclose(out.data, [1.0, -1.0], atol=1e-9)

    def test_zero_gain(self):
        x = Tensor(np.random.default_rng(2).normal(size=(3, 4)))
        out = ad.layer_norm(x, self.zeros, Tensor(np.full(4, 7.0)))
        np.testing.assert_array_equal(out.data, np.full((3, 4), 7.0))

    def test_normalises_each_token(self):
        x = np.random.default_rng(2).normal(size=(5, 8)) * 3 + 1
        out = ad.layer_norm(Tensor(x), Tensor(np.ones(8)), Tensor(np.zeros(8))).data
        np.testing.assert_allclose(out.mean(axis=-1), 0.0, atol=1e-12)
        np.testing.assert_allclose(out.var(axis=-1), 1.0, atol=1e-5)

    def test_gain_shape_checked(self):
        with pytest.raises(ShapeError):
            ad.layer_norm(Tensor(np.ones((2, 4))), Tensor(np.ones(3)), Tensor(np.zeros(3)))


class TestGelu:
    def test_values(self):
        out = ad.gelu(Tensor([0.0, 10.0, -10.0])).data
        assert out[0] == 0.0
        assert abs(out[1] - 10.0) < 1e-6
        assert abs(out[2]) < 1e-6

    def test_known_point(self):
        # tanh approximation at x = 1
        c = np.sqrt(2 / np.pi)
        expected = 0.5 * (1 + np.tanh(c * (1 + 0.044715)))
        assert ad.gelu(Tensor([1.0])).data[0] == pytest.approx(expected, abs=1e-15)


class TestStopGradient:
    def test_weighted_sum(self):
        w, v = param([1.0, -2.0, 3.0]), param([0.5, 0.5, 0.5])
        backward(ad.tensor_sum(ad.mul(ad.stop_gradient(w), v)))
        assert w.grad is None or not np.any(w.grad)
        np.testing.assert_array_equal(v.grad, w.data)

    def test_only_path(self):
        w = param([1.0, 2.0])
        assert backward(ad.tensor_sum(ad.stop_gradient(w))) == {}
        assert w.grad is None

    def test_blocks_upstream(self):
        x = param([1.0, 2.0])
        h = ad.mul(x, x)
        loss = ad.tensor_sum(ad.stop_gradient(h)) + ad.tensor_sum(x)
        backward(loss)
        np.testing.assert_array_equal(x.grad, [1.0, 1.0])

    def test_forward_identity(self):
        x = np.random.default_rng(5).normal(size=(3, 3))
        np.testing.assert_array_equal(ad.stop_gradient(Tensor(x)).data, x)


class TestBackward:
    def test_square(self):
        x = param(3.0)
        backward(ad.square(x))
        assert x.grad == pytest.approx(6.0)

    def test_non_scalar_rejected(self):
        x = param([1.0, 2.0])
        with pytest.raises(BackwardError):
            backward(ad.mul(x, x))

    def test_matmul_sum_finite_difference(self):
        rng = np.random.default_rng(0)
        a, b = param(rng.normal(size=(3, 4))), param(rng.normal(size=(4, 2)))
        res = check_gradients(lambda: ad.tensor_sum(ad.matmul(a, b)), [a, b], h=1e-4)
        assert res.max_error < 1e-3

    def test_fan_out_accumulates(self):
        """Shared subexpression: gradient equals the sum over paths of an expanded graph."""
        rng = np.random.default_rng(4)
        x0 = rng.normal(size=5)
        x = param(x0)
        s = ad.tanh(x)
        shared = ad.tensor_sum(ad.mul(s, s)) + ad.tensor_sum(ad.mul(s, x))
        backward(shared)

        y = param(x0)
        s1, s2, s3 = ad.tanh(y), ad.tanh(y), ad.tanh(y)
        expanded = ad.tensor_sum(ad.mul(s1, s2)) + ad.tensor_sum(ad.mul(s3, y))
        backward(expanded)
        np.testing.assert_allclose(x.grad, y.grad, atol=1e-14)

    def test_record_is_topological(self):
        a, b = param([1.0]), param([2.0])
        c = ad.mul(a, b)
        d = ad.add(c, a)
        loss = ad.tensor_sum(ad.mul(d, c))
        order = ad.computation_record(loss)
        pos = {id(t): i for i, t in enumerate(order)}
        for t in order:
            for parent, _ in t.parents:
                assert pos[id(parent)] < pos[id(t)]
        assert len(pos) == len(order)

    def test_no_grad_records_nothing(self):
        x = param([1.0, 2.0])
        with ad.no_grad():
            y = ad.mul(x, x)
        assert not y.requires_grad and not y.parents

    def test_grad_has_data_shape(self):
        w = param(np.ones((2, 3)))
        backward(ad.tensor_sum(ad.linear(Tensor(np.ones((4, 3))), w, None)))
        assert w.grad.shape == w.shape


class TestBroadcastRules:
    def test_row_bias(self):
        out = ad.add(Tensor(np.zeros((2, 3))), Tensor([1.0, 2.0, 3.0]))
        np.testing.assert_array_equal(out.data, [[1, 2, 3], [1, 2, 3]])

    def test_other_mismatch_rejected(self):
        with pytest.raises(ShapeError):
            ad.add(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 1))))

    def test_bias_gradient_sums_rows(self):
        b = param([0.0, 0.0, 0.0])
        backward(ad.tensor_sum(ad.add(Tensor(np.ones((4, 3))), b)))
        np.testing.assert_array_equal(b.grad, [4.0, 4.0, 4.0])


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_random_composite_gradients(seed):
    """Random small graph mixing most primitives passes the central-difference check."""
    rng = np.random.default_rng(seed)
    x = param(rng.normal(size=(2, 3)))
    w = param(rng.normal(size=(4, 3)))
    g = param(rng.uniform(0.5, 1.5, size=4))

    def fn():
        h = ad.gelu(ad.linear(x, w, None))
        h = ad.layer_norm(h, g, Tensor(np.zeros(4)))
        p = ad.softmax(h, axis=-1)
        return ad.tensor_sum(ad.mul(p, ad.tanh(h))) + ad.mean(ad.exp(ad.mul(h, Tensor(0.1))))

    assert check_gradients(fn, [x, w, g], h=1e-5).max_error < 1e-3
