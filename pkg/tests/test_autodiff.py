import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sentiflow import autodiff as ad
from sentiflow.autodiff import ShapeError, Tensor
from sentiflow.gradcheck import numerical_gradient, relative_error


def param(data):
    return Tensor(np.array(data, dtype=np.float64), requires_grad=True)


def grad_of(fn, *params):
    with ad.Tape() as tape:
        loss = fn()
    return ad.backward(tape, loss, params)


def assert_fd(fn, *params, tol=1e-5):
    grads = grad_of(fn, *params)
    for p in params:
        numeric = numerical_gradient(lambda: fn().item(), p.data)
        assert relative_error(grads[p], numeric).max() < tol


class TestForward:
    def test_matmul_identity(self):
        out = ad.matmul(ad.constant(np.eye(2)), ad.constant([[3.0], [4.0]]))
        np.testing.assert_array_equal(out.data, [[3.0], [4.0]])

    def test_matmul_zero(self):
        out = ad.matmul(ad.constant([[1.0, 2.0], [3.0, 4.0]]), ad.constant([[0.0], [0.0]]))
        np.testing.assert_array_equal(out.data, [[0.0], [0.0]])

    def test_matmul_hand_computed(self):
        out = ad.matmul(ad.constant([[1.0, 2.0], [3.0, 4.0]]), ad.constant([[5.0], [6.0]]))
        np.testing.assert_array_equal(out.data, [[17.0], [39.0]])

    def test_matmul_shape_error_names_both(self):
        with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 3\)"):
            ad.matmul(ad.constant(np.ones((2, 3))), ad.constant(np.ones((2, 3))))

    def test_elementwise(self):
        np.testing.assert_array_equal(ad.elementwise(ad.constant([1, 2]), ad.constant([0, 0]), "add").data, [1, 2])
        np.testing.assert_array_equal(ad.elementwise(ad.constant([1, 2]), ad.constant([1, 1]), "mul").data, [1, 2])
        np.testing.assert_array_equal(ad.mul(ad.constant([0.5, -2.0]), ad.constant([4.0, 3.0])).data, [2.0, -6.0])
        with pytest.raises(ShapeError):
            ad.add(ad.constant([1.0]), ad.constant([1.0, 2.0]))

    def test_activations(self):
        assert ad.activation(ad.constant(0.0), "sigmoid").item() == 0.5
        assert ad.activation(ad.constant(0.0), "tanh").item() == 0.0
        assert ad.sigmoid(ad.constant(2.0)).item() == pytest.approx(0.880797, abs=5e-7)

    def test_sigmoid_extremes_are_finite(self):
        y = ad.sigmoid(ad.constant([-800.0, 800.0])).data
        assert np.all(np.isfinite(y))
        np.testing.assert_allclose(y, [0.0, 1.0])

    def test_concat(self):
        np.testing.assert_array_equal(ad.concat(ad.constant([1.0, 2.0]), ad.constant([3.0]), 0).data, [1, 2, 3])
        np.testing.assert_array_equal(ad.concat(ad.constant(np.zeros(0)), ad.constant([5.0]), 0).data, [5])
        with pytest.raises(ShapeError):
            ad.concat(ad.constant(np.ones((2, 2))), ad.constant(np.ones((3, 1))), -1)

    def test_embedding_lookup(self):
        np.testing.assert_array_equal(ad.embedding_lookup(ad.constant(np.eye(3)), 1).data, [0, 1, 0])
        with pytest.raises(IndexError):
            ad.embedding_lookup(ad.constant(np.eye(3)), 3)

    def test_cross_entropy_values(self):
        assert ad.softmax_cross_entropy(ad.constant([0.3, 0.3, 0.3]), 1).item() == pytest.approx(math.log(3))
        assert ad.softmax_cross_entropy(ad.constant([1000.0, -1000.0]), 0).item() == pytest.approx(0.0, abs=1e-12)
        assert ad.softmax_cross_entropy(ad.constant([1.0, 2.0, 3.0]), 2).item() == pytest.approx(0.407606, abs=5e-7)
        with pytest.raises(IndexError):
            ad.softmax_cross_entropy(ad.constant([1.0, 2.0]), 2)

    def test_batched_cross_entropy_is_weighted_sum(self):
        logits = np.array([[1.0, 2.0, 3.0], [0.0, 0.0, 0.0]])
        out = ad.softmax_cross_entropy(ad.constant(logits), [2, 1], [0.25, 0.75]).item()
        assert out == pytest.approx(0.25 * 0.4076059644 + 0.75 * math.log(3))


class TestBackward:
    def test_sum_gives_ones(self):
        p = param(np.random.default_rng(0).normal(size=(3, 2)))
        g = grad_of(lambda: ad.sum_all(p), p)
        np.testing.assert_array_equal(g[p], np.ones((3, 2)))

    def test_zero_scaled_gives_zero(self):
        p = param([1.0, -2.0])
        g = grad_of(lambda: ad.sum_all(ad.scale(p, 0.0)), p)
        np.testing.assert_array_equal(g[p], [0.0, 0.0])

    def test_reuse_accumulates(self):
        table = param(np.eye(3))
        g = grad_of(lambda: ad.sum_all(ad.add(ad.embedding_lookup(table, 1), ad.embedding_lookup(table, 1))), table)
        np.testing.assert_array_equal(g[table], [[0, 0, 0], [2, 2, 2], [0, 0, 0]])

    def test_lookup_gradient_only_on_rows_used(self):
        rng = np.random.default_rng(1)
        table = param(rng.normal(size=(4, 3)))
        w = ad.constant(rng.normal(size=3))
        fn = lambda: ad.sum_all(ad.mul(ad.tanh(ad.embedding_lookup(table, 2)), w))  # noqa: E731
        g = grad_of(fn, table)[table]
        assert np.all(g[[0, 1, 3]] == 0) and np.any(g[2] != 0)
        assert_fd(fn, table)

    def test_concat_gradient_splits(self):
        rng = np.random.default_rng(2)
        a, b = param(rng.normal(size=3)), param(rng.normal(size=2))
        w = ad.constant(rng.normal(size=5))
        fn = lambda: ad.sum_all(ad.mul(ad.tanh(ad.concat(a, b)), w))  # noqa: E731
        assert_fd(fn, a, b)

    def test_cross_entropy_gradient(self):
        z = param([1.0, 2.0, 3.0])
        g = grad_of(lambda: ad.softmax_cross_entropy(z, 2), z)[z]
        p = np.exp([1.0, 2.0, 3.0]) / np.exp([1.0, 2.0, 3.0]).sum()
        np.testing.assert_allclose(g, p - [0, 0, 1])

    def test_composite_matches_finite_differences(self):
        rng = np.random.default_rng(3)
        a, b, c = (param(rng.uniform(-2, 2, size=s)) for s in [(3, 4), (4, 2), (3, 2)])
        fn = lambda: ad.sum_all(ad.mul(ad.sigmoid(ad.matmul(a, b)), ad.tanh(c)))  # noqa: E731
        assert_fd(fn, a, b, c)

    def test_linear_vector_and_batch(self):
        rng = np.random.default_rng(4)
        w, b = param(rng.normal(size=(3, 4))), param(rng.normal(size=3))
        x1, xb = param(rng.normal(size=4)), param(rng.normal(size=(2, 4)))
        assert_fd(lambda: ad.softmax_cross_entropy(ad.linear(x1, w, b), 1), x1, w, b)
        assert_fd(lambda: ad.softmax_cross_entropy(ad.linear(xb, w, b), [0, 2], [0.3, 0.7]), xb, w, b)

    def test_slices(self):
        rng = np.random.default_rng(5)
        x = param(rng.normal(size=(2, 8)))
        w = [ad.constant(rng.normal(size=(2, 2))) for _ in range(4)]
        fn = lambda: ad.add_scalars([ad.sum_all(ad.mul(ad.sigmoid(p), wi))  # noqa: E731
                                     for p, wi in zip(ad.split_last(x, 4), w)])
        assert_fd(fn, x)

    def test_linearity_of_accumulation(self):
        rng = np.random.default_rng(6)
        p = param(rng.normal(size=(2, 3)))
        f1 = lambda: ad.sum_all(ad.tanh(p))  # noqa: E731
        f2 = lambda: ad.softmax_cross_entropy(ad.sigmoid(p), [1, 2])  # noqa: E731
        both = grad_of(lambda: ad.add_scalars([f1(), f2()]), p)[p]
        np.testing.assert_allclose(both, grad_of(f1, p)[p] + grad_of(f2, p)[p], rtol=1e-14, atol=1e-15)

    def test_errors(self):
        p = param([1.0, 2.0])
        with ad.Tape() as tape:
            y = ad.tanh(p)
        with pytest.raises(ShapeError):
            ad.backward(tape, y)
        with pytest.raises(ValueError, match="not produced"):
            ad.backward(ad.Tape(), ad.sum_all(p))

    def test_no_tape_no_recording(self):
        p = param([1.0])
        out = ad.tanh(p)
        assert not out.requires_grad


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1), st.sampled_from(["sigmoid", "tanh"]))
def test_random_ops_match_finite_differences(seed, kind):
    rng = np.random.default_rng(seed)
    a = param(rng.uniform(-2, 2, size=(2, 3)))
    b = param(rng.uniform(-2, 2, size=(2, 3)))
    w = param(rng.uniform(-2, 2, size=(4, 3)))
    fn = lambda: ad.softmax_cross_entropy(  # noqa: E731
        ad.linear(ad.activation(ad.mul(a, b), kind), w), [1, 3])
    assert_fd(fn, a, b, w)


def test_forward_bit_reproducible():
    rng = np.random.default_rng(7)
    a, b = rng.normal(size=(5, 4)), rng.normal(size=(4, 3))
    r1 = ad.tanh(ad.matmul(ad.constant(a), ad.constant(b))).data
    r2 = ad.tanh(ad.matmul(ad.constant(a.copy()), ad.constant(b.copy()))).data
    assert r1.tobytes() == r2.tobytes()
