"""Multiplex graph container, file ingestion and small graph utilities.

A multiplex graph has one shared node set and ``L`` undirected edge sets
(layers / views).  Nodes are stored under dense 0-based indices; the
external identifiers seen in input files are kept in ``node_labels`` in
first-seen order.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

logger = logging.getLogger(__name__)

# Directive comments understood by ``load_multiplex``.  Other readers treat
# them as ordinary comments.  They keep empty layers and isolated nodes
# alive across a write/read round trip.
_LAYERS_DIRECTIVE = "#@layers"
_NODE_DIRECTIVE = "#@node"

DENSE_OPERATOR_MAX_NODES = 2048


class GraphFormatError(ValueError):
    """Raised for malformed edge, attribute or query files."""


@dataclass(frozen=True, eq=False)
class MultiplexGraph:
    """Undirected multiplex graph over a shared node set.

    Parameters
    ----------
    node_count : int
        Number of nodes ``n``.
    edges : tuple of ndarray
        One ``(m_r, 2)`` integer array per layer holding each undirected
        edge once, with ``u < v``, sorted lexicographically.
    attributes : ndarray or None
        Optional ``(n, f)`` real matrix of node attributes.
    node_labels : tuple of str or None
        External identifier of every dense index.
    """

    node_count: int
    edges: tuple
    attributes: np.ndarray | None = None
    node_labels: tuple | None = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.attributes is not None and self.attributes.shape[0] != self.node_count:
            raise ValueError(
                f"attribute rows ({self.attributes.shape[0]}) != node_count ({self.node_count})"
            )
        if self.node_labels is not None and len(self.node_labels) != self.node_count:
            raise ValueError("node_labels length must equal node_count")

    @classmethod
    def from_edges(cls, node_count, layer_edges, attributes=None, node_labels=None):
        """Build a graph from per-layer iterables of ``(u, v)`` pairs.

        Edges are symmetrised and de-duplicated.  Self-loops raise.
        """
        layers = []
        for r, pairs in enumerate(layer_edges):
            arr = np.asarray(list(pairs) if not isinstance(pairs, np.ndarray) else pairs,
                             dtype=np.int64).reshape(-1, 2)
            if arr.size and (arr.min() < 0 or arr.max() >= node_count):
                raise ValueError(f"layer {r}: node index out of range")
            if np.any(arr[:, 0] == arr[:, 1]):
                raise ValueError(f"layer {r}: self-loops are not allowed")
            arr = np.sort(arr, axis=1)
            arr = np.unique(arr, axis=0) if arr.size else arr.reshape(0, 2)
            layers.append(arr)
        if attributes is not None:
            attributes = np.asarray(attributes, dtype=np.float64)
            if attributes.ndim != 2:
                raise ValueError("attributes must be a 2-d matrix")
        if node_labels is not None:
            node_labels = tuple(str(x) for x in node_labels)
        return cls(int(node_count), tuple(layers), attributes, node_labels)

    @property
    def layer_count(self) -> int:
        return len(self.edges)

    def edge_count(self, layer=None) -> int:
        if layer is None:
            return sum(len(e) for e in self.edges)
        return len(self.edges[layer])

    def adjacency(self, layer: int) -> sp.csr_matrix:
        """Symmetric 0/1 adjacency of one layer as CSR."""
        key = ("adj", layer)
        if key not in self._cache:
            e = self.edges[layer]
            n = self.node_count
            rows = np.concatenate([e[:, 0], e[:, 1]])
            cols = np.concatenate([e[:, 1], e[:, 0]])
            a = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
            a.sort_indices()
            self._cache[key] = a
        return self._cache[key]

    def union_adjacency(self) -> sp.csr_matrix:
        """Adjacency of the union graph over all layers (0/1 entries)."""
        if "union" not in self._cache:
            n = self.node_count
            a = sp.csr_matrix((n, n))
            for r in range(self.layer_count):
                a = a + self.adjacency(r)
            a = (a > 0).astype(np.float64).tocsr()
            a.sort_indices()
            self._cache["union"] = a
        return self._cache["union"]

    def neighbors(self, layer: int, u: int) -> np.ndarray:
        a = self.adjacency(layer)
        return a.indices[a.indptr[u]:a.indptr[u + 1]]

    def union_neighbors(self, u: int) -> np.ndarray:
        a = self.union_adjacency()
        return a.indices[a.indptr[u]:a.indptr[u + 1]]

    def degrees(self, layer: int) -> np.ndarray:
        a = self.adjacency(layer)
        return np.diff(a.indptr).astype(np.int64)

    def normalized_adjacency(self, layer: int) -> sp.csr_matrix:
        """Sparse ``A_hat`` with ``A_hat[u, v] = 1/sqrt(p_u p_v)`` on edges."""
        key = ("ahat", layer)
        if key not in self._cache:
            a = self.adjacency(layer).tocoo()
            p = degree_norm(self)[layer]
            vals = 1.0 / np.sqrt(p[a.row] * p[a.col])
            m = sp.csr_matrix((vals, (a.row, a.col)), shape=a.shape)
            m.sort_indices()
            self._cache[key] = m
        return self._cache[key]

    def propagation_operator(self, layer: int):
        """``A_hat`` in whichever storage multiplies fastest.

        Small layers with density of at least 5% are returned as a dense
        array (BLAS beats CSR there); everything else stays CSR.
        """
        key = ("op", layer)
        if key not in self._cache:
            m = self.normalized_adjacency(layer)
            n = self.node_count
            dense = n <= DENSE_OPERATOR_MAX_NODES and m.nnz >= 0.05 * n * n
            self._cache[key] = m.toarray() if dense else m
        return self._cache[key]

    def index_of(self, label) -> int:
        """Dense index of an external node id."""
        if self.node_labels is None:
            idx = int(label)
            if not 0 <= idx < self.node_count:
                raise KeyError(label)
            return idx
        lookup = self._cache.get("lookup")
        if lookup is None:
            lookup = {lab: i for i, lab in enumerate(self.node_labels)}
            self._cache["lookup"] = lookup
        try:
            return lookup[str(label)]
        except KeyError:
            raise KeyError(label) from None

    def label_of(self, index: int) -> str:
        if self.node_labels is None:
            return str(index)
        return self.node_labels[index]


def degree_norm(g: MultiplexGraph) -> np.ndarray:
    """Per-layer ``deg + 1`` as an ``(L, n)`` float array."""
    if "p" not in g._cache:
        p = np.ones((g.layer_count, g.node_count))
        for r in range(g.layer_count):
            p[r] += g.degrees(r)
        p.setflags(write=False)
        g._cache["p"] = p
    return g._cache["p"]


def load_multiplex(edge_path, attr_path=None) -> MultiplexGraph:
    """Read an edge-list file (and optionally an attribute CSV).

    Each non-comment line is ``<layer> <src> <dst>`` separated by tabs or
    spaces.  Node and layer ids are tokens.  When every layer token is a
    non-negative integer, layer ``r`` is stored at index ``r``; otherwise
    layers are numbered in first-seen order.
    """
    labels: dict[str, int] = {}
    layer_tokens: dict[str, list] = {}
    declared_layers = 0
    self_loops = 0

    def node_id(tok):
        if tok not in labels:
            labels[tok] = len(labels)
        return labels[tok]

    with open(edge_path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                parts = line.split()
                if parts[0] == _LAYERS_DIRECTIVE and len(parts) == 2:
                    declared_layers = int(parts[1])
                elif parts[0] == _NODE_DIRECTIVE and len(parts) == 2:
                    node_id(parts[1])
                continue
            parts = line.split()
            if len(parts) != 3:
                raise GraphFormatError(
                    f"{edge_path}:{lineno}: expected '<layer> <src> <dst>', got {line!r}"
                )
            layer, a, b = parts
            if a == b:
                self_loops += 1
                node_id(a)
                continue
            layer_tokens.setdefault(layer, []).append((node_id(a), node_id(b)))

    if self_loops:
        logger.warning("%s: skipped %d self-loop line(s)", edge_path, self_loops)

    keys = list(layer_tokens)
    if all(k.isdigit() for k in keys):
        count = max([int(k) + 1 for k in keys] + [declared_layers])
        layer_edges = [[] for _ in range(count)]
        for k in keys:
            layer_edges[int(k)].extend(layer_tokens[k])
    else:
        layer_edges = [layer_tokens[k] for k in keys]
        layer_edges += [[] for _ in range(max(0, declared_layers - len(layer_edges)))]

    node_labels = tuple(labels)
    attributes = None
    if attr_path is not None:
        attributes = _load_attributes(attr_path, labels)
    return MultiplexGraph.from_edges(len(labels), layer_edges, attributes, node_labels)


def _load_attributes(path, labels):
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise GraphFormatError(f"{path}: empty attribute file") from None
        if not header or header[0].strip() != "node":
            raise GraphFormatError(f"{path}:1: header must start with 'node'")
        f = len(header) - 1
        X = np.full((len(labels), f), np.nan)
        seen = np.zeros(len(labels), dtype=bool)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != f + 1:
                raise GraphFormatError(f"{path}:{lineno}: expected {f + 1} fields")
            tok = row[0].strip()
            if tok not in labels:
                raise GraphFormatError(f"{path}:{lineno}: unknown node {tok!r}")
            try:
                X[labels[tok]] = [float(x) for x in row[1:]]
            except ValueError as exc:
                raise GraphFormatError(f"{path}:{lineno}: {exc}") from None
            seen[labels[tok]] = True
    if not seen.all():
        missing = [lab for lab, i in labels.items() if not seen[i]]
        raise GraphFormatError(f"{path}: missing attribute rows for {missing[:5]}")
    return X


def write_multiplex(g: MultiplexGraph, edge_path, attr_path=None) -> None:
    """Write ``g`` in the format read by :func:`load_multiplex`."""
    lab = g.label_of
    with open(edge_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"{_LAYERS_DIRECTIVE} {g.layer_count}\n")
        for u in range(g.node_count):
            fh.write(f"{_NODE_DIRECTIVE} {lab(u)}\n")
        for r, e in enumerate(g.edges):
            for u, v in e:
                fh.write(f"{r}\t{lab(u)}\t{lab(v)}\n")
    if attr_path is not None:
        if g.attributes is None:
            raise ValueError("graph has no attributes to write")
        with open(attr_path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["node"] + [f"f{j}" for j in range(g.attributes.shape[1])])
            for u in range(g.node_count):
                w.writerow([lab(u)] + [repr(float(x)) for x in g.attributes[u]])


def khop_subgraph(g: MultiplexGraph, seeds: Iterable[int], k: int):
    """Induced multiplex subgraph on nodes within union-graph distance ``k``.

    Returns ``(subgraph, index_map)`` where ``index_map`` maps old dense
    indices to new ones.  Nodes keep their relative order.
    """
    seeds = sorted(set(int(s) for s in seeds))
    if not seeds:
        raise ValueError("seeds must be nonempty")
    if k < 0:
        raise ValueError("k must be >= 0")
    for s in seeds:
        if not 0 <= s < g.node_count:
            raise ValueError(f"seed {s} out of range [0, {g.node_count})")

    dist = np.full(g.node_count, -1, dtype=np.int64)
    dist[seeds] = 0
    frontier = deque(seeds)
    while frontier:
        u = frontier.popleft()
        if dist[u] == k:
            continue
        for v in g.union_neighbors(u):
            if dist[v] < 0:
                dist[v] = dist[u] + 1
                frontier.append(v)
    keep = np.flatnonzero(dist >= 0)
    return induced_subgraph(g, keep)


def induced_subgraph(g: MultiplexGraph, nodes: Sequence[int]):
    nodes = np.asarray(sorted(set(int(x) for x in nodes)), dtype=np.int64)
    remap = np.full(g.node_count, -1, dtype=np.int64)
    remap[nodes] = np.arange(len(nodes))
    layers = []
    for e in g.edges:
        m = (remap[e[:, 0]] >= 0) & (remap[e[:, 1]] >= 0)
        layers.append(remap[e[m]])
    attrs = None if g.attributes is None else g.attributes[nodes]
    labels = None if g.node_labels is None else tuple(g.node_labels[i] for i in nodes)
    sub = MultiplexGraph.from_edges(len(nodes), layers, attrs, labels)
    index_map = {int(old): int(new) for new, old in enumerate(nodes)}
    return sub, index_map


def encode_query(q: Iterable[int], n: int) -> np.ndarray:
    """One-hot ``{0,1}^n`` float vector of the query node set."""
    q = list(q)
    if not q:
        raise ValueError("empty query")
    bits = np.zeros(n)
    for u in q:
        u = int(u)
        if not 0 <= u < n:
            raise ValueError(f"query node {u} out of range [0, {n})")
        bits[u] = 1.0
    return bits


def default_features(g: MultiplexGraph) -> np.ndarray:
    """Stand-in attributes when none are given: column ``r`` is the
    layer-``r`` degree scaled by its maximum."""
    X = np.zeros((g.node_count, g.layer_count))
    for r in range(g.layer_count):
        d = g.degrees(r).astype(np.float64)
        if d.max() > 0:
            X[:, r] = d / d.max()
    return X


def row_normalize(X: np.ndarray) -> np.ndarray:
    """Divide each row by its L2 norm; zero rows stay zero."""
    X = np.asarray(X, dtype=np.float64)
    norms = np.linalg.norm(X, axis=1, keepdims=True)
    return np.divide(X, norms, out=np.zeros_like(X), where=norms > 0)


def node_features(g: MultiplexGraph) -> np.ndarray:
    """Row-normalised input feature matrix for the view encoders."""
    X = g.attributes if g.attributes is not None else default_features(g)
    return row_normalize(X)


def read_queries(path, g: MultiplexGraph | None = None):
    """Read a JSON-lines query file.

    Returns a list of ``(query, community)`` tuples; ``community`` is None
    when absent.  With ``g`` given, external ids are mapped to dense indices.
    """
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                query = [str(x) for x in rec["query"]]
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise GraphFormatError(f"{path}:{lineno}: {exc}") from None
            comm = rec.get("community")
            comm = None if comm is None else [str(x) for x in comm]
            if g is not None:
                try:
                    query = [g.index_of(x) for x in query]
                    comm = None if comm is None else [g.index_of(x) for x in comm]
                except KeyError as exc:
                    raise GraphFormatError(f"{path}:{lineno}: unknown node {exc.args[0]!r}") from None
            out.append((query, comm))
    return out


def write_queries(path, pairs, g: MultiplexGraph | None = None) -> None:
    """Write ``(query, community)`` pairs of dense indices as JSON-lines."""
    lab = (lambda u: str(u)) if g is None else g.label_of
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for q, c in pairs:
            rec = {"query": [lab(u) for u in q]}
            if c is not None:
                rec["community"] = [lab(u) for u in sorted(c)]
            fh.write(json.dumps(rec) + "\n")


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


__all__ = [
    "GraphFormatError",
    "MultiplexGraph",
    "default_features",
    "degree_norm",
    "encode_query",
    "file_digest",
    "induced_subgraph",
    "khop_subgraph",
    "load_multiplex",
    "node_features",
    "read_queries",
    "row_normalize",
    "write_multiplex",
    "write_queries",
]
