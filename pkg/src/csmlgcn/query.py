"""Online query stage: score nodes with a trained model and grow a
connected community from the query nodes."""

from __future__ import annotations

import statistics
import time
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .autodiff import BCE_CLAMP
from .graph import MultiplexGraph, encode_query, khop_subgraph
from .model import ModelParams, check_compatible, forward, view_cache


@dataclass
class Community:
    query: tuple
    members: frozenset
    scores: np.ndarray = field(repr=False)
    millis: float = 0.0

    def __len__(self):
        return len(self.members)

    def sorted_members(self) -> list:
        return sorted(self.members)


def _check_query(g: MultiplexGraph, V_q) -> list:
    V_q = sorted(set(int(u) for u in V_q))
    if not V_q:
        raise ValueError("empty query")
    for u in V_q:
        if not 0 <= u < g.node_count:
            raise ValueError(f"query node {u} not in graph")
    return V_q


def infer_scores(g: MultiplexGraph, X: np.ndarray, params: ModelParams, V_q,
                 candidate_hops: int | None = None, ve_cache=None) -> np.ndarray:
    """Membership probabilities for every node (dropout off), clamped to
    ``[1e-12, 1 - 1e-12]`` so that ``eta = 1`` admits no neighbour.

    With ``candidate_hops`` set the model runs on the k-hop candidate
    subgraph of the query and nodes outside it score 0.
    """
    V_q = _check_query(g, V_q)
    check_compatible(params, g, X)
    if candidate_hops is None:
        psi, _ = forward(g, X, encode_query(V_q, g.node_count), params, ve_cache=ve_cache)
        return np.clip(psi.data.reshape(-1), BCE_CLAMP, 1.0 - BCE_CLAMP)
    sub, index_map = khop_subgraph(g, V_q, candidate_hops)
    nodes = np.fromiter(index_map.keys(), dtype=np.int64)
    c = encode_query([index_map[u] for u in V_q], sub.node_count)
    psi_sub, _ = forward(sub, X[nodes], c, params)
    psi = np.zeros(g.node_count)
    psi[nodes] = np.clip(psi_sub.data.reshape(-1), BCE_CLAMP, 1.0 - BCE_CLAMP)
    return psi


def extract_community(g: MultiplexGraph, psi, V_q, eta: float, allowed=None,
                      lifo: bool = False) -> frozenset:
    """Breadth-first growth from the query over all views, admitting a
    neighbour when its score is at least ``eta``.

    ``allowed`` optionally confines the search to a boolean node mask.
    ``lifo=True`` pops the most recent node instead (same result set).
    """
    if not 0.0 <= eta <= 1.0:
        raise ValueError(f"eta must lie in [0, 1], got {eta}")
    V_q = _check_query(g, V_q)
    psi = np.asarray(psi).reshape(-1)
    ok = psi >= eta
    if allowed is not None:
        ok &= np.asarray(allowed, dtype=bool)
    in_c = np.zeros(g.node_count, dtype=bool)
    in_c[V_q] = True
    queue = deque(V_q)
    pop = queue.pop if lifo else queue.popleft
    union = g.union_adjacency()
    indptr, indices = union.indptr, union.indices
    ok &= ~in_c
    while queue:
        u = pop()
        nb = indices[indptr[u]:indptr[u + 1]]
        new = nb[ok[nb]]
        if new.size:
            ok[new] = False
            in_c[new] = True
            queue.extend(new.tolist())
    return frozenset(np.flatnonzero(in_c).tolist())


def identify_community(g: MultiplexGraph, X, params: ModelParams, V_q, eta: float = 0.5,
                       candidate_hops: int | None = None, ve_cache=None) -> Community:
    """Score the query with the model and extract its connected community."""
    if not 0.0 <= eta <= 1.0:
        raise ValueError(f"eta must lie in [0, 1], got {eta}")
    t0 = time.perf_counter()
    V_q = _check_query(g, V_q)
    psi = infer_scores(g, X, params, V_q, candidate_hops, ve_cache)
    allowed = None
    if candidate_hops is not None:
        sub_nodes = khop_subgraph(g, V_q, candidate_hops)[1]
        allowed = np.zeros(g.node_count, dtype=bool)
        allowed[list(sub_nodes)] = True
    members = extract_community(g, psi, V_q, eta, allowed)
    return Community(tuple(V_q), members, psi, 1000.0 * (time.perf_counter() - t0))


def timing_stats(millis) -> dict:
    millis = list(millis)
    if not millis:
        return {"count": 0, "mean_millis": 0.0, "median_millis": 0.0, "total_millis": 0.0}
    return {"count": len(millis), "mean_millis": sum(millis) / len(millis),
            "median_millis": statistics.median(millis), "total_millis": sum(millis)}


def batch_query(g, X, params, queries, eta=0.5, candidate_hops=None):
    """Run :func:`identify_community` over many queries.

    Returns ``(communities, stats)`` where stats holds mean/median wall
    clock in milliseconds.
    """
    cache = None
    if candidate_hops is None and queries:
        cache = view_cache(g, X, params)
    out = [identify_community(g, X, params, q, eta, candidate_hops, cache) for q in queries]
    return out, timing_stats(c.millis for c in out)
