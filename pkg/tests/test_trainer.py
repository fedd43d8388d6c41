import numpy as np
import pytest

from csmlgcn.bench import SynthSpec, gen_synthetic
from csmlgcn.config import TrainConfig
from csmlgcn.graph import node_features
from csmlgcn.model import init_params
from csmlgcn.trainer import _prepare, evaluate_f1, query_loss, train

FAST = TrainConfig(hidden_dim=16, out_dim=8, head_dim=8, epochs=8, learning_rate=0.01, seed=3)


@pytest.fixture(scope="module")
def planted():
    d = gen_synthetic(SynthSpec(node_count=40, community_count=2, layer_count=2, n_queries=12, seed=1))
    return d, node_features(d.graph)


def test_loss_decreases(planted):
    d, X = planted
    _, rec = train(d.graph, X, d.pairs[:8], FAST)
    assert len(rec) == 8
    assert rec.loss[-1] < rec.loss[0]


def test_zero_epochs_leaves_params(planted):
    d, X = planted
    p0 = init_params(2, X.shape[1], FAST, np.random.default_rng(0))
    before = p0.copy()
    p, rec = train(d.graph, X, d.pairs, FAST.replace(epochs=0), params=p0)
    assert len(rec) == 0
    for k in before.arrays:
        np.testing.assert_array_equal(before.arrays[k], p.arrays[k])


def test_deterministic(planted):
    d, X = planted
    cfg = FAST.replace(epochs=3)
    p1, r1 = train(d.graph, X, d.pairs[:6], cfg, d.pairs[6:])
    p2, r2 = train(d.graph, X, d.pairs[:6], cfg, d.pairs[6:])
    assert r1.loss == r2.loss and r1.val_f1 == r2.val_f1
    assert r1.best_iteration == r2.best_iteration
    for k in p1.arrays:
        np.testing.assert_array_equal(p1.arrays[k], p2.arrays[k])


def test_zero_learning_rate_constant_loss(planted):
    d, X = planted
    _, rec = train(d.graph, X, d.pairs[:5], FAST.replace(epochs=4, learning_rate=0.0, dropout_rate=0.0))
    assert max(rec.loss) - min(rec.loss) < 1e-12


def test_full_candidate_subgraph_is_identity(planted):
    d, X = planted
    cfg = FAST.replace(epochs=2, select_best=False)
    a, ra = train(d.graph, X, d.pairs[:4], cfg)
    b, rb = train(d.graph, X, d.pairs[:4], cfg.replace(candidate_hops=d.graph.node_count))
    np.testing.assert_allclose(ra.loss, rb.loss, rtol=1e-12)
    for k in a.arrays:
        np.testing.assert_allclose(a.arrays[k], b.arrays[k], atol=1e-12)


def test_query_step_reads_only_its_query(planted):
    d, X = planted
    cfg = FAST.replace(dropout_rate=0.0)
    params = init_params(2, X.shape[1], cfg, np.random.default_rng(0))
    samples = _prepare(d.graph, X, d.pairs[:3], None)

    def grads():
        leaves = params.leaves()
        query_loss(samples[0], params, leaves, cfg, False, None).backward()
        return {k: v.grad for k, v in leaves.items()}

    before = grads()
    for s in samples[1:]:
        s.c[:] = 1.0  # scribble over the other queries
    after = grads()
    for k in before:
        np.testing.assert_array_equal(before[k], after[k])


def test_select_best_matches_record(planted):
    d, X = planted
    p, rec = train(d.graph, X, d.pairs[:6], FAST.replace(epochs=4), d.pairs[6:])
    assert rec.best_iteration == int(np.argmax(rec.val_f1)) + 1
    got = evaluate_f1(d.graph, X, p, d.pairs[6:], FAST.eta_default)
    assert got == pytest.approx(max(rec.val_f1))


def test_iteration_unit_query(planted):
    d, X = planted
    _, rec = train(d.graph, X, d.pairs[:5], FAST.replace(epochs=7, iteration_unit="query"))
    assert len(rec) == 7


def test_bad_pairs(planted, caplog):
    d, X = planted
    with pytest.raises(ValueError, match="does not contain"):
        train(d.graph, X, [([0], [1, 2])], FAST)
    with pytest.raises(ValueError, match="no usable"):
        train(d.graph, X, [([0], [])], FAST)
    assert "empty ground-truth" in caplog.text


def test_nonfinite_loss_raises(planted):
    d, X = planted
    params = init_params(2, X.shape[1], FAST, np.random.default_rng(0))
    params.arrays["head.W2"][:] = np.nan
    with pytest.raises(FloatingPointError):
        train(d.graph, X, d.pairs[:2], FAST, params=params)


def test_callback_sees_every_iteration(planted):
    d, X = planted
    seen = []
    train(d.graph, X, d.pairs[:3], FAST.replace(epochs=3), callback=lambda *a: seen.append(a[0]))
    assert seen == [1, 2, 3]
