import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from csmlgcn import autodiff as ad
from csmlgcn.autodiff import Value, grad_check

from conftest import dense_ahat, random_multiplex


def leaf(rng, *shape):
    return Value(rng.normal(size=shape), requires_grad=True)


class TestGradCheck:
    def test_matmul(self, rng):
        a, b = leaf(rng, 3, 4), leaf(rng, 4, 2)
        assert grad_check(lambda: ad.mean_all(ad.matmul(a, b)), [a, b]) < 1e-6

    def test_sigmoid(self, rng):
        a = leaf(rng, 5, 3)
        assert grad_check(lambda: ad.mean_all(ad.sigmoid(a)), [a]) < 1e-6

    def test_softmax_weighted(self, rng):
        a = leaf(rng, 2, 4)
        w = rng.normal(size=(2, 4))
        assert grad_check(lambda: ad.mean_all(ad.mul(ad.softmax_rows(a), w)), [a]) < 1e-6

    def test_tanh_sum_rows_column_hstack(self, rng):
        a, b = leaf(rng, 4, 2), leaf(rng, 4, 3)

        def f():
            s = ad.hstack([ad.tanh(a), b])
            return ad.mean_all(ad.mul(ad.column(s, 3), ad.sum_rows(ad.column(s, 0))))

        assert grad_check(f, [a, b]) < 1e-6

    def test_bce(self, rng):
        z = leaf(rng, 6, 1)
        y = (rng.random(6) < 0.5).astype(float)
        assert grad_check(lambda: ad.bce_loss(ad.sigmoid(z), y), [z]) < 1e-6

    def test_graph_conv_both_paths(self, rng):
        g = random_multiplex(rng, 8, 1, 0.4)
        ahat = g.normalized_adjacency(0)
        for d_in, d_out in ((3, 5), (5, 2)):
            h, ws, wn, b = leaf(rng, 8, d_in), leaf(rng, d_in, d_out), leaf(rng, d_in, d_out), leaf(rng, 1, d_out)
            f = lambda: ad.mean_all(ad.tanh(ad.graph_conv(h, ws, wn, b, ahat)))
            assert grad_check(f, [h, ws, wn, b]) < 1e-6

    def test_detects_wrong_gradient(self, rng):
        a = leaf(rng, 2, 2)

        def wrong():
            out = ad.tanh(a)
            out._backward = lambda g: a._accumulate(g)  # forgot the derivative
            return ad.mean_all(out)

        assert grad_check(wrong, [a]) > 1e-2


def test_shared_input_accumulates(rng):
    a = leaf(rng, 3, 3)
    out = ad.mean_all(ad.add(ad.mul(a, a), a))
    out.backward()
    np.testing.assert_allclose(a.grad, (2 * a.data + 1) / 9)


def test_no_graph_without_grad(rng):
    a = Value(rng.normal(size=(2, 2)))
    out = ad.tanh(ad.matmul(a, a))
    assert out._parents == () and not out.requires_grad
    with pytest.raises(RuntimeError):
        out.backward()


def test_shape_mismatch_raises():
    with pytest.raises(ValueError):
        ad.add(Value(np.ones((2, 3))), Value(np.ones((3, 2))))
    with pytest.raises(ValueError):
        ad.matmul(Value(np.ones((2, 3))), Value(np.ones((2, 3))))


def test_softmax_nan_raises():
    with pytest.raises(ValueError):
        ad.softmax_rows(Value(np.array([[np.nan, 0.0]])))


@settings(max_examples=50, deadline=None)
@given(rows=st.integers(1, 5), cols=st.integers(1, 6), shift=st.floats(-50, 50), seed=st.integers(0, 999))
def test_softmax_shift_invariance(rows, cols, shift, seed):
    x = np.random.default_rng(seed).normal(size=(rows, cols)) * 10
    a = ad.softmax_rows(Value(x)).data
    b = ad.softmax_rows(Value(x + shift)).data
    np.testing.assert_allclose(a, b, atol=1e-12)
    np.testing.assert_allclose(a.sum(axis=1), 1.0, atol=1e-12)


def test_sigmoid_extremes_finite():
    s = ad.sigmoid(Value(np.array([[-800.0, 0.0, 800.0]]))).data
    assert np.isfinite(s).all()
    np.testing.assert_allclose(s, [[0.0, 0.5, 1.0]])


class TestDropout:
    def test_eval_is_identity(self, rng):
        a = Value(rng.normal(size=(4, 4)))
        assert ad.dropout(a, 0.5, training=False) is a

    def test_mean_preserved(self):
        out = ad.dropout(Value(np.ones((400, 250))), 0.5, True, np.random.default_rng(0)).data
        assert abs(out.mean() - 1.0) < 0.02
        assert set(np.unique(out)) <= {0.0, 2.0}

    def test_needs_rng_and_valid_rate(self):
        with pytest.raises(ValueError):
            ad.dropout(Value(np.ones((2, 2))), 0.5, True)
        with pytest.raises(ValueError):
            ad.dropout(Value(np.ones((2, 2))), 1.0, True, np.random.default_rng(0))

    def test_relu_dropout_matches_composition(self):
        x = np.random.default_rng(1).normal(size=(30, 7))
        fused = ad.relu_dropout(Value(x), 0.3, True, np.random.default_rng(5)).data
        plain = ad.dropout(ad.relu(Value(x)), 0.3, True, np.random.default_rng(5)).data
        np.testing.assert_array_equal(fused, plain)


def test_bce_hand_value():
    loss = ad.bce_loss(Value(np.array([[0.9], [0.2]])), [1, 0]).item()
    assert loss == pytest.approx(-(np.log(0.9) + np.log(0.8)) / 2, abs=1e-12)


def test_bce_clamp_finite():
    loss = ad.bce_loss(Value(np.array([[0.0], [1.0]])), [1, 0]).item()
    assert np.isfinite(loss)
    # 1 - (1 - 1e-12) is not exactly 1e-12 in floating point
    assert loss == pytest.approx(-np.log(1e-12), rel=1e-5)


class TestNeighborAggregate:
    def test_isolated_node_is_zero(self):
        from csmlgcn.graph import MultiplexGraph

        g = MultiplexGraph.from_edges(3, [[(0, 1)]])
        out = ad.neighbor_aggregate(Value(np.ones((3, 2))), g, 0).data
        np.testing.assert_array_equal(out[2], [0, 0])

    def test_single_edge(self):
        from csmlgcn.graph import MultiplexGraph

        g = MultiplexGraph.from_edges(2, [[(0, 1)]])
        out = ad.neighbor_aggregate(Value(np.array([[1.0], [4.0]])), g, 0).data
        np.testing.assert_allclose(out, [[2.0], [0.5]])

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 10_000), n=st.integers(1, 15), p=st.floats(0, 1))
    def test_matches_dense_oracle(self, seed, n, p):
        rng = np.random.default_rng(seed)
        g = random_multiplex(rng, n, 1, p)
        h = rng.normal(size=(n, 3))
        A, _ = dense_ahat(g, 0)
        np.testing.assert_allclose(ad.neighbor_aggregate(Value(h), g, 0).data, A @ h, atol=1e-12)

    def test_gradient(self, rng):
        g = random_multiplex(rng, 7, 1, 0.5)
        h = leaf(rng, 7, 2)
        w = rng.normal(size=(7, 2))
        assert grad_check(lambda: ad.mean_all(ad.mul(ad.neighbor_aggregate(h, g, 0), w)), [h]) < 1e-6


@pytest.mark.parametrize("dense", [False, True])
@pytest.mark.parametrize("d_in,d_out", [(4, 6), (6, 3)])
def test_graph_conv_matches_composition(rng, dense, d_in, d_out):
    g = random_multiplex(rng, 9, 1, 0.4)
    A = g.normalized_adjacency(0)
    op = A.toarray() if dense else sp.csr_matrix(A)
    h, ws, wn, b = leaf(rng, 9, d_in), leaf(rng, d_in, d_out), leaf(rng, d_in, d_out), leaf(rng, 1, d_out)
    fused = ad.graph_conv(h, ws, wn, b, op, symmetric=True)
    ref = ad.add(ad.add(ad.matmul(h, ws), ad.sparse_matmul(A, ad.matmul(h, wn))),
                 b)
    np.testing.assert_allclose(fused.data, ref.data, atol=1e-12)
    seed = rng.normal(size=fused.shape)
    fused.backward(seed)
    grads = [x.grad.copy() for x in (h, ws, wn, b)]
    for x in (h, ws, wn, b):
        x.zero_grad()
    ref.backward(seed)
    for got, x in zip(grads, (h, ws, wn, b)):
        np.testing.assert_allclose(got, x.grad, atol=1e-10)


@pytest.mark.parametrize("rate", [0.1, 0.3, 0.5, 0.77])
def test_dropout_mask_is_unbiased(rate):
    x = np.ones((400, 500))
    out = ad.relu_dropout(Value(x), rate, True, np.random.default_rng(0)).data
    kept = out > 0
    assert abs(kept.mean() - (1 - rate)) < 0.005
    # every kept entry has the same scale, and the scale undoes the keep rate exactly
    scale = out[kept][0]
    assert np.all(out[kept] == scale)
    assert scale == pytest.approx(65536 / (65536 - round(rate * 65536)), rel=1e-15)
