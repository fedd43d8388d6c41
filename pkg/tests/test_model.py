import json

import numpy as np
import pytest

from csmlgcn import autodiff as ad
from csmlgcn.config import TrainConfig
from csmlgcn.graph import encode_query, node_features
from csmlgcn.model import (
    CheckpointError,
    forward,
    init_params,
    load_checkpoint,
    save_checkpoint,
    score_queries,
    view_cache,
)

from conftest import random_multiplex

SMALL = TrainConfig(hidden_dim=5, out_dim=3, head_dim=4)


def test_init_shapes_and_zero_biases(rng):
    p = init_params(2, 7, SMALL, rng)
    assert p.arrays["view0.ve0.W_self"].shape == (7, 5)
    assert p.arrays["view1.ve1.W_neigh"].shape == (5, 3)
    assert p.arrays["view0.qe0.W_self"].shape == (1, 5)
    assert p.arrays["att1.W"].shape == (3, 3)
    assert p.arrays["head.W2"].shape == (4, 1)
    for k, v in p.arrays.items():
        if "bias" in k or k.startswith("head.b"):
            assert not v.any()
    limit = np.sqrt(6 / (7 + 5))
    assert np.abs(p.arrays["view0.ve0.W_self"]).max() <= limit


def test_init_deterministic():
    a = init_params(2, 3, SMALL, np.random.default_rng(4))
    b = init_params(2, 3, SMALL, np.random.default_rng(4))
    for k in a.arrays:
        np.testing.assert_array_equal(a.arrays[k], b.arrays[k])


def test_full_model_gradient(rng):
    g = random_multiplex(rng, 6, 2, 0.5)
    X = node_features(g)
    p = init_params(2, X.shape[1], SMALL, rng)
    for k in p.arrays:  # exercise bias gradients too
        p.arrays[k] = p.arrays[k] + 0.1 * rng.normal(size=p.arrays[k].shape)
    leaves = p.leaves()
    y = np.array([1, 1, 0, 1, 0, 0])
    c = encode_query([0], 6)
    f = lambda: ad.bce_loss(forward(g, X, c, p, leaves)[0], y)
    assert ad.grad_check(f, list(leaves.values())) < 1e-4


def test_view_cache_matches_uncached(rng):
    g = random_multiplex(rng, 8, 2, 0.4)
    X = node_features(g)
    p = init_params(2, X.shape[1], SMALL, rng)
    c = encode_query([3], 8)
    a = forward(g, X, c, p)[0].data
    b = forward(g, X, c, p, ve_cache=view_cache(g, X, p))[0].data
    np.testing.assert_array_equal(a, b)


class TestCheckpoint:
    def test_round_trip_exact(self, tmp_path, rng):
        g = random_multiplex(rng, 8, 2, 0.4)
        X = node_features(g)
        p = init_params(2, X.shape[1], SMALL, rng)
        path = tmp_path / "m.json"
        save_checkpoint(path, p, SMALL, g.node_labels, {"note": 1})
        q, cfg, labels, extra = load_checkpoint(path)
        for k in p.arrays:
            np.testing.assert_array_equal(p.arrays[k], q.arrays[k])
        assert cfg == SMALL and labels == g.node_labels and extra == {"note": 1}
        c = encode_query([1], 8)
        np.testing.assert_array_equal(forward(g, X, c, p)[0].data, forward(g, X, c, q)[0].data)

    def test_version_mismatch(self, tmp_path, rng):
        path = tmp_path / "m.json"
        save_checkpoint(path, init_params(1, 2, SMALL, rng), SMALL)
        doc = json.loads(path.read_text())
        doc["version"] = 99
        path.write_text(json.dumps(doc))
        with pytest.raises(CheckpointError, match="version"):
            load_checkpoint(path)

    def test_corrupt(self, tmp_path, rng):
        path = tmp_path / "m.json"
        path.write_text("{not json")
        with pytest.raises(CheckpointError):
            load_checkpoint(path)
        save_checkpoint(path, init_params(1, 2, SMALL, rng), SMALL)
        doc = json.loads(path.read_text())
        del doc["arrays"]["head.W1"]
        path.write_text(json.dumps(doc))
        with pytest.raises(CheckpointError, match="head.W1"):
            load_checkpoint(path)

    def test_incompatible_graph(self, rng):
        g = random_multiplex(rng, 5, 3, 0.4)
        X = node_features(g)
        p = init_params(2, X.shape[1], SMALL, rng)
        from csmlgcn.query import infer_scores
        with pytest.raises(ValueError, match="views"):
            infer_scores(g, X, p, [0])


def test_batched_scores_match_per_query_forward(rng):
    for depth, n, p in ((1, 15, 0.3), (2, 15, 0.3), (3, 15, 0.3), (2, 40, 0.02)):
        g = random_multiplex(rng, n, 3, p)
        X = rng.normal(size=(n, 4))
        params = init_params(3, 4, TrainConfig(hidden_dim=6, out_dim=5, head_dim=4, depth=depth), rng)
        for k, v in params.arrays.items():
            params.arrays[k] = v + 0.1 * rng.normal(size=v.shape)
        queries = [[0], [3, 7], [14, 2, 9], [5]]
        got = score_queries(g, X, params, queries, chunk_elems=2 * 15 * 6)
        for row, q in zip(got, queries):
            expect = forward(g, X, encode_query(q, n), params)[0].data.reshape(-1)
            np.testing.assert_allclose(row, expect, rtol=1e-12, atol=1e-14)
    assert not isinstance(g.propagation_operator(0), np.ndarray)  # sparse path covered
    with pytest.raises(ValueError):
        score_queries(g, X, params, [[n]])
