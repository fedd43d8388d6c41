"""Offline training: one optimizer step per training query."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .config import TrainConfig
from .graph import MultiplexGraph, encode_query, khop_subgraph
from .metrics import f1_score
from .model import ModelParams, check_compatible, forward, init_params, score_queries
from .optim import SGD, Adam
from .query import extract_community, infer_scores

logger = logging.getLogger(__name__)


@dataclass
class TrainingRecord:
    loss: list = field(default_factory=list)
    val_f1: list = field(default_factory=list)
    seconds: list = field(default_factory=list)
    best_iteration: int | None = None

    def __len__(self):
        return len(self.loss)

    def rows(self):
        for i, (l, f, s) in enumerate(zip(self.loss, self.val_f1, self.seconds), start=1):
            yield i, l, f, s


@dataclass
class _Sample:
    graph: MultiplexGraph
    X: np.ndarray
    c: np.ndarray
    y: np.ndarray


def _prepare(g, X, queries, hops):
    samples = []
    for i, (q, comm) in enumerate(queries):
        q = sorted(set(int(u) for u in q))
        if not q:
            raise ValueError(f"training query {i} is empty")
        if not comm:
            logger.warning("training query %d has an empty ground-truth community; skipped", i)
            continue
        comm = set(int(u) for u in comm)
        if not set(q) <= comm:
            raise ValueError(f"training query {i}: community does not contain the query nodes")
        if hops is None:
            y = np.zeros(g.node_count)
            y[list(comm)] = 1.0
            samples.append(_Sample(g, X, encode_query(q, g.node_count), y))
        else:
            sub, index_map = khop_subgraph(g, q, hops)
            nodes = np.fromiter(index_map.keys(), dtype=np.int64)
            y = np.array([1.0 if u in comm else 0.0 for u in nodes])
            c = encode_query([index_map[u] for u in q], sub.node_count)
            samples.append(_Sample(sub, X[nodes], c, y))
    return samples


def query_loss(sample: _Sample, params: ModelParams, leaves, config: TrainConfig,
               training: bool, rng) -> ad.Value:
    psi, _ = forward(sample.graph, sample.X, sample.c, params, leaves,
                     config.dropout_rate, training, rng)
    return ad.bce_loss(psi, sample.y)


def evaluate_f1(g, X, params, queries, eta, candidate_hops=None) -> float:
    """Mean F1 of the extracted communities over ``(query, truth)`` pairs."""
    if not queries:
        return float("nan")
    if candidate_hops is None:
        psi_all = score_queries(g, X, params, [q for q, _ in queries])
        psi_all = np.clip(psi_all, ad.BCE_CLAMP, 1.0 - ad.BCE_CLAMP)
    scores = []
    for i, (q, truth) in enumerate(queries):
        psi = psi_all[i] if candidate_hops is None else infer_scores(g, X, params, q, candidate_hops)
        allowed = None
        if candidate_hops is not None:
            allowed = np.zeros(g.node_count, dtype=bool)
            allowed[list(khop_subgraph(g, q, candidate_hops)[1])] = True
        members = extract_community(g, psi, q, eta, allowed)
        scores.append(f1_score(members, truth))
    return float(np.mean(scores))


def train(g: MultiplexGraph, X: np.ndarray, queries, config: TrainConfig | None = None,
          val_queries=None, params: ModelParams | None = None, callback=None):
    """Train a model on ``(query, community)`` pairs of dense node indices.

    Every iteration is a shuffled pass over the training queries with one
    optimizer step per query (``iteration_unit="epoch"``), or a single
    query step (``iteration_unit="query"``).  When validation queries are
    given, their mean F1 at ``eta_default`` is recorded after every
    iteration and, with ``select_best``, the best parameters are returned.

    Returns ``(params, record)``.
    """
    config = config or TrainConfig()
    rng = np.random.default_rng(config.seed)
    X = np.asarray(X, dtype=np.float64)
    if params is None:
        params = init_params(g.layer_count, X.shape[1], config, rng)
    check_compatible(params, g, X)
    samples = _prepare(g, X, queries, config.candidate_hops)
    if not samples and config.epochs > 0:
        raise ValueError("no usable training queries")
    val_queries = list(val_queries or [])

    if config.optimizer == "adam":
        opt = Adam(config.learning_rate, config.adam_beta1, config.adam_beta2, config.adam_eps)
    else:
        opt = SGD(config.learning_rate)

    record = TrainingRecord()
    best, best_f1 = None, -np.inf
    order, cursor = [], 0
    for it in range(config.epochs):
        t0 = time.perf_counter()
        if config.iteration_unit == "epoch":
            batch = rng.permutation(len(samples))
        else:
            if cursor >= len(order):
                order, cursor = rng.permutation(len(samples)), 0
            batch = order[cursor:cursor + 1]
            cursor += 1
        epoch_loss = 0.0
        for i in batch:
            leaves = params.leaves()
            loss = query_loss(samples[i], params, leaves, config, True, rng)
            value = loss.item()
            if not np.isfinite(value):
                raise FloatingPointError(
                    f"non-finite loss at iteration {it + 1}, training query {i}"
                )
            loss.backward()
            opt.step(params.arrays, {k: v.grad for k, v in leaves.items()})
            epoch_loss += value
        record.loss.append(epoch_loss)
        f1 = evaluate_f1(g, X, params, val_queries, config.eta_default, config.candidate_hops)
        record.val_f1.append(f1)
        record.seconds.append(time.perf_counter() - t0)
        if config.select_best and val_queries and f1 > best_f1:
            best, best_f1 = params.copy(), f1
            record.best_iteration = it + 1
        if callback is not None:
            callback(it + 1, epoch_loss, f1)
        logger.debug("iteration %d loss %.6f val_f1 %.4f", it + 1, epoch_loss, f1)

    if best is not None:
        return best, record
    return params, record
