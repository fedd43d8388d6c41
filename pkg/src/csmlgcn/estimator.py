"""scikit-learn style front end.

>>> est = CommunitySearchGCN(epochs=50).fit(graph, queries, communities)
>>> est.predict([[3]])            # list of node sets
>>> est.predict_proba([3])        # membership probabilities
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .config import TrainConfig
from .graph import node_features
from .metrics import f1_score
from .model import load_checkpoint, save_checkpoint
from .query import batch_query, infer_scores
from .trainer import train
from .validation import check_eta, check_features, check_graph, check_node_set, check_pairs, check_queries


class CommunitySearchGCN(BaseEstimator):
    """Query-driven multiplex GCN for community search.

    ``fit`` learns from ``(query, community)`` pairs on one multiplex
    graph; ``predict`` returns a connected community per query without
    retraining.

    Parameters mirror :class:`~csmlgcn.config.TrainConfig`; ``eta`` is
    the membership threshold used by ``predict`` and during validation.
    """

    def __init__(self, epochs=200, learning_rate=0.001, dropout_rate=0.5, hidden_dim=128,
                 out_dim=64, head_dim=64, depth=2, eta=0.5, candidate_hops=None,
                 optimizer="adam", iteration_unit="epoch", select_best=True, random_state=0):
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.dropout_rate = dropout_rate
        self.hidden_dim = hidden_dim
        self.out_dim = out_dim
        self.head_dim = head_dim
        self.depth = depth
        self.eta = eta
        self.candidate_hops = candidate_hops
        self.optimizer = optimizer
        self.iteration_unit = iteration_unit
        self.select_best = select_best
        self.random_state = random_state

    def _config(self) -> TrainConfig:
        return TrainConfig(
            epochs=self.epochs, learning_rate=self.learning_rate, dropout_rate=self.dropout_rate,
            hidden_dim=self.hidden_dim, out_dim=self.out_dim, head_dim=self.head_dim,
            depth=self.depth, eta_default=self.eta, seed=int(self.random_state or 0),
            candidate_hops=self.candidate_hops, optimizer=self.optimizer,
            iteration_unit=self.iteration_unit, select_best=self.select_best,
        )

    def fit(self, graph, queries, communities, X=None, validation=None):
        """Train on ``queries[i] -> communities[i]`` (dense node indices).

        ``X`` defaults to the graph's row-normalised attributes (or degree
        features).  ``validation`` is an optional ``(queries, communities)``
        tuple used for best-iteration selection.
        """
        g = check_graph(graph)
        X = node_features(g) if X is None else check_features(X, g)
        pairs = check_pairs(queries, communities, g.node_count)
        val = check_pairs(*validation, g.node_count) if validation is not None else None
        config = self._config()
        self.params_, self.record_ = train(g, X, pairs, config, val)
        self.graph_ = g
        self.features_ = X
        self.config_ = config
        self.n_views_ = g.layer_count
        return self

    def predict_proba(self, query) -> np.ndarray:
        """Membership probability of every node for one query."""
        check_is_fitted(self, "params_")
        q = check_node_set(query, self.graph_.node_count)
        return infer_scores(self.graph_, self.features_, self.params_, q, self.candidate_hops)

    def predict(self, queries, eta=None) -> list:
        """Connected community (a ``frozenset``) for each query."""
        check_is_fitted(self, "params_")
        eta = check_eta(self.eta if eta is None else eta)
        qs = check_queries(queries, self.graph_.node_count)
        comms, self.last_timing_ = batch_query(self.graph_, self.features_, self.params_, qs,
                                               eta, self.candidate_hops)
        return [c.members for c in comms]

    def score(self, queries, communities, eta=None) -> float:
        """Mean F1 of predicted against true communities."""
        preds = self.predict(queries, eta)
        return float(np.mean([f1_score(p, t) for p, t in zip(preds, communities)]))

    def save(self, path):
        check_is_fitted(self, "params_")
        save_checkpoint(path, self.params_, self.config_, self.graph_.node_labels)

    @classmethod
    def load(cls, path, graph, X=None):
        """Rebuild a fitted estimator from a checkpoint and its graph."""
        params, config, _, _ = load_checkpoint(path)
        est = cls(epochs=config.epochs, learning_rate=config.learning_rate,
                  dropout_rate=config.dropout_rate, hidden_dim=config.hidden_dim,
                  out_dim=config.out_dim, head_dim=config.head_dim, depth=config.depth,
                  eta=config.eta_default, candidate_hops=config.candidate_hops,
                  optimizer=config.optimizer, iteration_unit=config.iteration_unit,
                  select_best=config.select_best, random_state=config.seed)
        g = check_graph(graph)
        est.graph_ = g
        est.features_ = node_features(g) if X is None else check_features(X, g)
        est.params_ = params
        est.config_ = config
        est.n_views_ = g.layer_count
        return est
