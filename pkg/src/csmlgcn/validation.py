"""Input validation helpers shared by the estimator and the CLI."""

from __future__ import annotations

import numbers

import numpy as np

from .graph import MultiplexGraph


def check_graph(g) -> MultiplexGraph:
    if not isinstance(g, MultiplexGraph):
        raise TypeError(f"expected a MultiplexGraph, got {type(g).__name__}")
    if g.layer_count < 1:
        raise ValueError("graph has no layers")
    if g.node_count < 1:
        raise ValueError("graph has no nodes")
    return g


def check_node_set(nodes, n: int, what="query") -> list:
    """Sorted, de-duplicated dense indices; raises on empty or out-of-range."""
    if isinstance(nodes, numbers.Integral):
        nodes = [nodes]
    out = sorted(set(int(u) for u in nodes))
    if not out:
        raise ValueError(f"empty {what}")
    bad = [u for u in out if not 0 <= u < n]
    if bad:
        raise ValueError(f"{what} node(s) {bad[:5]} out of range [0, {n})")
    return out


def check_queries(queries, n: int) -> list:
    queries = list(queries)
    if not queries:
        raise ValueError("no queries given")
    return [check_node_set(q, n) for q in queries]


def check_pairs(queries, communities, n: int) -> list:
    queries = check_queries(queries, n)
    communities = list(communities)
    if len(communities) != len(queries):
        raise ValueError(f"{len(queries)} queries but {len(communities)} communities")
    pairs = []
    for i, (q, c) in enumerate(zip(queries, communities)):
        c = check_node_set(c, n, what="community")
        if not set(q) <= set(c):
            raise ValueError(f"pair {i}: community does not contain the query nodes")
        pairs.append((q, c))
    return pairs


def check_features(X, g: MultiplexGraph) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != g.node_count:
        raise ValueError(f"features must have shape ({g.node_count}, f), got {X.shape}")
    if not np.isfinite(X).all():
        raise ValueError("features contain non-finite values")
    return X


def check_eta(eta) -> float:
    eta = float(eta)
    if not 0.0 <= eta <= 1.0:
        raise ValueError(f"eta must lie in [0, 1], got {eta}")
    return eta
