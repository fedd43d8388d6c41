import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from csmlgcn.bench import SynthSpec, gen_synthetic
from csmlgcn.estimator import CommunitySearchGCN


@pytest.fixture(scope="module")
def data():
    return gen_synthetic(SynthSpec(node_count=30, community_count=2, layer_count=2, n_queries=8, seed=6))


def small(**kw):
    return CommunitySearchGCN(epochs=3, hidden_dim=8, out_dim=4, head_dim=4, learning_rate=0.01, **kw)


def test_get_params_and_clone():
    est = small(eta=0.4)
    p = est.get_params()
    assert p["eta"] == 0.4 and p["epochs"] == 3
    assert clone(est).get_params() == p


def test_not_fitted():
    with pytest.raises(NotFittedError):
        small().predict([[0]])


def test_fit_predict_save_load(data, tmp_path):
    qs, cs = zip(*data.pairs)
    est = small().fit(data.graph, qs[:6], cs[:6], validation=(qs[6:], cs[6:]))
    preds = est.predict(qs[6:])
    assert all(set(q) <= p for q, p in zip(qs[6:], preds))
    proba = est.predict_proba(qs[0])
    assert proba.shape == (30,) and np.all((proba > 0) & (proba < 1))
    assert 0.0 <= est.score(qs[6:], cs[6:]) <= 1.0
    est.save(tmp_path / "m.json")
    back = CommunitySearchGCN.load(tmp_path / "m.json", data.graph)
    np.testing.assert_array_equal(back.predict_proba(qs[0]), proba)


def test_input_validation(data):
    est = small()
    with pytest.raises(TypeError):
        est.fit("graph", [[0]], [[0]])
    with pytest.raises(ValueError, match="contain"):
        est.fit(data.graph, [[0]], [[1]])
    with pytest.raises(ValueError):
        est.fit(data.graph, [[0]], [[0]], X=np.ones((3, 2)))
