"""Evaluation protocol, synthetic multiplex benchmarks and ablation runs."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .config import TrainConfig
from .graph import MultiplexGraph, node_features
from .metrics import f1_score, precision_recall_f1
from .model import ModelParams
from .query import batch_query
from .trainer import train

DEFAULT_RATIO = (150, 100, 100)
METRICS_HEADER = ["query_id", "f1", "precision", "recall", "community_size"]
TIMINGS_HEADER = ["query_id", "millis"]
ABLATION_HEADER = ["value", "mean_f1", "mean_size"]

__all__ = [
    "EvalResult",
    "QuerySplit",
    "SynthData",
    "SynthSpec",
    "f1_score",
    "gen_synthetic",
    "make_splits",
    "run_ablation",
    "run_eval",
]


def _rng(rng):
    return rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)


@dataclass
class QuerySplit:
    train: list
    validation: list
    test: list

    def sizes(self):
        return len(self.train), len(self.validation), len(self.test)


def make_splits(pairs, ratio=DEFAULT_RATIO, rng=0) -> QuerySplit:
    """Seeded shuffle, then a proportional cut into train/validation/test.

    Validation and test sizes are rounded down (at least one each);
    the remainder goes to training.
    """
    pairs = list(pairs)
    n = len(pairs)
    if n < 3:
        raise ValueError(f"need at least 3 query pairs to split, got {n}")
    if len(ratio) != 3 or min(ratio) <= 0:
        raise ValueError("ratio must hold three positive parts")
    total = sum(ratio)
    n_val = max(1, n * ratio[1] // total)
    n_test = max(1, n * ratio[2] // total)
    order = _rng(rng).permutation(n)
    shuffled = [pairs[i] for i in order]
    n_train = n - n_val - n_test
    return QuerySplit(shuffled[:n_train], shuffled[n_train:n_train + n_val],
                      shuffled[n_train + n_val:])


@dataclass
class SynthSpec:
    node_count: int = 200
    community_count: int = 4
    layer_count: int = 3
    p_in: float = 0.3
    p_out: float = 0.05
    noise_layers: int = 0
    p_noise: float = 0.1
    attribute_mode: str = "community"  # or "none"
    flip_prob: float = 0.1
    n_queries: int | None = None  # default min(node_count, 350)
    max_seeds: int = 3
    seed: int = 0

    def validate(self):
        for name in ("p_in", "p_out", "p_noise", "flip_prob"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.community_count < 1 or self.node_count < self.community_count:
            raise ValueError("need 1 <= community_count <= node_count")
        if self.layer_count < 0 or self.noise_layers < 0 or self.layer_count + self.noise_layers < 1:
            raise ValueError("need at least one layer")
        if self.attribute_mode not in ("none", "community"):
            raise ValueError(f"unknown attribute_mode {self.attribute_mode!r}")
        if self.max_seeds < 1:
            raise ValueError("max_seeds must be >= 1")


@dataclass
class SynthData:
    graph: MultiplexGraph
    membership: np.ndarray  # community id of every node
    pairs: list = field(repr=False)
    spec: SynthSpec = None

    @property
    def signal_layers(self):
        return list(range(self.spec.layer_count))

    @property
    def noise_layers(self):
        return list(range(self.spec.layer_count, self.spec.layer_count + self.spec.noise_layers))

    def community(self, c) -> list:
        return [int(u) for u in np.flatnonzero(self.membership == c)]


def _bernoulli_edges(rng, prob_matrix):
    n = prob_matrix.shape[0]
    iu, ju = np.triu_indices(n, k=1)
    hit = rng.random(len(iu)) < prob_matrix[iu, ju]
    return np.stack([iu[hit], ju[hit]], axis=1)


def gen_synthetic(spec: SynthSpec) -> SynthData:
    """Planted-partition multiplex graph with optional pure-noise layers.

    Signal layers share one balanced partition (edge probability ``p_in``
    inside a community, ``p_out`` across).  Noise layers are Erdos-Renyi
    with ``p_noise``.  Query pairs pick a community, then 1..max_seeds
    of its nodes as the query; the whole community is the ground truth.
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    n, k = spec.node_count, spec.community_count
    sizes = [n // k + (1 if c < n % k else 0) for c in range(k)]
    membership = np.repeat(np.arange(k), sizes)

    same = membership[:, None] == membership[None, :]
    signal_p = np.where(same, spec.p_in, spec.p_out)
    layers = [_bernoulli_edges(rng, signal_p) for _ in range(spec.layer_count)]
    # separate stream: adding noise layers leaves everything else unchanged
    noise_rng = np.random.default_rng([spec.seed, 1])
    noise_p = np.full((n, n), spec.p_noise)
    noise = [_bernoulli_edges(noise_rng, noise_p) for _ in range(spec.noise_layers)]

    attributes = None
    if spec.attribute_mode == "community":
        onehot = np.eye(k)[membership]
        flips = rng.random(onehot.shape) < spec.flip_prob
        attributes = np.where(flips, 1.0 - onehot, onehot)

    graph = MultiplexGraph.from_edges(n, layers + noise, attributes)

    n_queries = min(n, 350) if spec.n_queries is None else spec.n_queries
    members = [np.flatnonzero(membership == c) for c in range(k)]
    pairs = []
    for _ in range(n_queries):
        c = int(rng.integers(k))
        size = int(rng.integers(1, min(spec.max_seeds, len(members[c])) + 1))
        q = sorted(int(u) for u in rng.choice(members[c], size=size, replace=False))
        pairs.append((q, [int(u) for u in members[c]]))
    return SynthData(graph, membership, pairs, spec)


@dataclass
class EvalResult:
    rows: list  # dicts keyed by METRICS_HEADER
    millis: list
    communities: list = field(repr=False, default_factory=list)

    @property
    def mean_f1(self) -> float:
        return float(np.mean([r["f1"] for r in self.rows])) if self.rows else float("nan")

    @property
    def mean_size(self) -> float:
        return float(np.mean([r["community_size"] for r in self.rows])) if self.rows else float("nan")

    @property
    def mean_millis(self) -> float:
        return float(np.mean(self.millis)) if self.millis else 0.0

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(METRICS_HEADER)
            for r in self.rows:
                w.writerow([r["query_id"], repr(r["f1"]), repr(r["precision"]),
                            repr(r["recall"]), r["community_size"]])

    def write_timings(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(TIMINGS_HEADER)
            for r, ms in zip(self.rows, self.millis):
                w.writerow([r["query_id"], f"{ms:.4f}"])


def score_communities(communities, truths) -> EvalResult:
    rows = []
    for i, (comm, truth) in enumerate(zip(communities, truths)):
        p, r, f = precision_recall_f1(comm.members, truth)
        rows.append({"query_id": i, "f1": f, "precision": p, "recall": r,
                     "community_size": len(comm.members)})
    return EvalResult(rows, [c.millis for c in communities], list(communities))


def run_eval(g, X, params: ModelParams, test_pairs, eta=0.5, candidate_hops=None) -> EvalResult:
    """Per-query F1/precision/recall/size and wall-clock for the test pairs."""
    queries = [q for q, _ in test_pairs]
    communities, _ = batch_query(g, X, params, queries, eta, candidate_hops)
    return score_communities(communities, [t for _, t in test_pairs])


def write_ablation_csv(rows, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ABLATION_HEADER)
        for value, f1, size in rows:
            w.writerow([value, repr(f1), repr(size)])


def run_ablation(axis: str, values, config: TrainConfig, g, X, split: QuerySplit,
                 params: ModelParams | None = None):
    """Sensitivity curve of mean test F1 along one axis.

    ``eta`` re-thresholds a single trained model (``params`` if given);
    ``epochs`` and ``dropout`` retrain once per value with the same seed.
    Returns a list of ``(value, mean_f1, mean_size)``.
    """
    values = list(values)
    if not values:
        raise ValueError("no ablation values")
    if axis not in ("eta", "epochs", "dropout"):
        raise ValueError(f"unknown ablation axis {axis!r}")
    hops = config.candidate_hops
    rows = []
    if axis == "eta":
        if params is None:
            params, _ = train(g, X, split.train, config, split.validation)
        for eta in values:
            res = run_eval(g, X, params, split.test, float(eta), hops)
            rows.append((eta, res.mean_f1, res.mean_size))
        return rows
    for v in values:
        if axis == "epochs":
            cfg = config.replace(epochs=int(v))
        else:
            cfg = config.replace(dropout_rate=float(v))
        p, _ = train(g, X, split.train, cfg, split.validation)
        res = run_eval(g, X, p, split.test, cfg.eta_default, hops)
        rows.append((v, res.mean_f1, res.mean_size))
    return rows


def synthetic_split(data: SynthData, ratio=DEFAULT_RATIO, rng=None) -> QuerySplit:
    return make_splits(data.pairs, ratio, data.spec.seed if rng is None else rng)


def features_for(data: SynthData) -> np.ndarray:
    return node_features(data.graph)
