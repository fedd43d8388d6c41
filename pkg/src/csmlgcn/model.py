"""Model parameters, initialisation, the full forward pass and checkpoints."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .attention import FusionOutput, fuse
from .config import TrainConfig
from .encoders import EncoderLayer, encode_all_views, view_encoder_forward
from .head import HeadParams, head_forward

CHECKPOINT_FORMAT = "csmlgcn-checkpoint"
CHECKPOINT_VERSION = 1


class CheckpointError(ValueError):
    pass


@dataclass
class ModelParams:
    """All trainable arrays, keyed by name, plus the dimensions they imply.

    Names follow ``view{r}.ve{l}.W_self``, ``view{r}.qe{l}.bias``,
    ``att{r}.W`` and ``head.W1`` etc.
    """

    arrays: dict
    layer_count: int
    feature_dim: int
    hidden_dim: int
    out_dim: int
    head_dim: int
    depth: int

    def encoder_dims(self, kind):
        first = self.feature_dim if kind == "ve" else 1
        return [first] + [self.hidden_dim] * (self.depth - 1) + [self.out_dim]

    def leaves(self) -> dict:
        """Fresh gradient-tracking leaves sharing the stored arrays."""
        return {k: ad.Value(v, requires_grad=True) for k, v in self.arrays.items()}

    def constants(self) -> dict:
        return {k: ad.Value(v) for k, v in self.arrays.items()}

    def copy(self) -> "ModelParams":
        return ModelParams({k: v.copy() for k, v in self.arrays.items()}, self.layer_count,
                           self.feature_dim, self.hidden_dim, self.out_dim, self.head_dim,
                           self.depth)

    def dims(self) -> dict:
        return dict(layer_count=self.layer_count, feature_dim=self.feature_dim,
                    hidden_dim=self.hidden_dim, out_dim=self.out_dim,
                    head_dim=self.head_dim, depth=self.depth)

    def n_parameters(self) -> int:
        return int(sum(v.size for v in self.arrays.values()))


def split_leaves(leaves: dict, params: ModelParams):
    """Group named leaves into the structures the forward pass consumes."""
    def enc(r, kind):
        return [EncoderLayer(leaves[f"view{r}.{kind}{l}.W_self"],
                             leaves[f"view{r}.{kind}{l}.W_neigh"],
                             leaves[f"view{r}.{kind}{l}.bias"])
                for l in range(params.depth)]

    L = params.layer_count
    view_layers = [enc(r, "ve") for r in range(L)]
    query_layers = [enc(r, "qe") for r in range(L)]
    W_att = [leaves[f"att{r}.W"] for r in range(L)]
    head = HeadParams(leaves["head.W1"], leaves["head.b1"], leaves["head.W2"], leaves["head.b2"])
    return view_layers, query_layers, W_att, head


def _glorot(rng, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def init_params(layer_count: int, feature_dim: int, config: TrainConfig | None = None,
                rng: np.random.Generator | None = None) -> ModelParams:
    """Glorot-uniform weights and zero biases."""
    config = config or TrainConfig()
    if rng is None:
        rng = np.random.default_rng(config.seed)
    params = ModelParams({}, layer_count, feature_dim, config.hidden_dim, config.out_dim,
                         config.head_dim, config.depth)
    arrays = params.arrays
    for r in range(layer_count):
        for kind in ("ve", "qe"):
            dims = params.encoder_dims(kind)
            for l, (a, b) in enumerate(zip(dims[:-1], dims[1:])):
                arrays[f"view{r}.{kind}{l}.W_self"] = _glorot(rng, a, b)
                arrays[f"view{r}.{kind}{l}.W_neigh"] = _glorot(rng, a, b)
                arrays[f"view{r}.{kind}{l}.bias"] = np.zeros((1, b))
    for r in range(layer_count):
        arrays[f"att{r}.W"] = _glorot(rng, config.out_dim, config.out_dim)
    arrays["head.W1"] = _glorot(rng, config.out_dim, config.head_dim)
    arrays["head.b1"] = np.zeros((1, config.head_dim))
    arrays["head.W2"] = _glorot(rng, config.head_dim, 1)
    arrays["head.b2"] = np.zeros((1, 1))
    return params


def check_compatible(params: ModelParams, g, X):
    if g.layer_count != params.layer_count:
        raise ValueError(f"model has {params.layer_count} views, graph has {g.layer_count}")
    if X.shape[1] != params.feature_dim:
        raise ValueError(f"model expects {params.feature_dim} features, got {X.shape[1]}")


def view_cache(g, X, params: ModelParams, leaves=None):
    """Eval-mode view-encoder outputs for every view (query independent)."""
    leaves = leaves or params.constants()
    view_layers = split_leaves(leaves, params)[0]
    return [view_encoder_forward(g, X, r, view_layers[r]) for r in range(g.layer_count)]


def forward(g, X, c_q, params: ModelParams, leaves=None, dropout_rate=0.0, training=False,
            rng=None, ve_cache=None) -> tuple[ad.Value, FusionOutput]:
    """Full forward pass; returns ``(psi, fusion)`` with ``psi`` of shape ``n x 1``."""
    if leaves is None:
        leaves = params.constants()
    view_layers, query_layers, W_att, head = split_leaves(leaves, params)
    h_tilde = encode_all_views(g, X, c_q, view_layers, query_layers, dropout_rate, training,
                               rng, ve_cache)
    fusion = fuse(h_tilde, W_att)
    return head_forward(fusion.zeta, head), fusion


def score_queries(g, X, params: ModelParams, queries, ve_cache=None, chunk_elems=1 << 22):
    """Eval-mode membership probabilities for many queries at once.

    Returns a ``len(queries) x n`` array equal (to rounding) to running
    :func:`forward` per query, but with each layer applied to a whole
    block of queries in one product.  ``queries`` are lists of dense node
    indices; ``ve_cache`` is the output of :func:`view_cache`.
    """
    a = params.arrays
    n, L, depth = g.node_count, params.layer_count, params.depth
    check_compatible(params, g, X)
    queries = [sorted(set(int(u) for u in q)) for q in queries]
    for q in queries:
        if not q or q[0] < 0 or q[-1] >= n:
            raise ValueError(f"query {q} is empty or has nodes outside the graph")
    if ve_cache is None:
        ve_cache = view_cache(g, X, params)
    ve = [[v.data for v in outs] for outs in ve_cache]
    ops = [g.propagation_operator(r) for r in range(L)]
    step = max(1, chunk_elems // (n * max(params.hidden_dim, params.out_dim)))
    out = np.empty((len(queries), n))
    for lo in range(0, len(queries), step):
        block = queries[lo:lo + step]
        C = np.zeros((n, len(block)))
        for j, q in enumerate(block):
            C[list(q), j] = 1.0
        h_tilde = []
        for r in range(L):
            A = ops[r]
            pre = f"view{r}.qe"
            # first layer: a one-column input, so the products are outer products
            Q = C.shape[1]
            inputs = np.stack([np.asarray(A @ C).T, C.T], axis=2).reshape(Q * n, 2)
            h = inputs @ np.vstack([a[pre + "0.W_neigh"], a[pre + "0.W_self"]])
            h += a[pre + "0.bias"]
            np.maximum(h, 0.0, out=h)
            h = h.reshape(Q, n, -1)
            for l in range(1, depth):
                h = h + ve[r][l - 1]
                hw = h @ a[f"{pre}{l}.W_neigh"]
                if isinstance(A, np.ndarray):
                    z = A @ hw
                else:
                    # sparse operator: one product through an n x (Q * d_out) view
                    d_out = hw.shape[2]
                    z = np.asarray(A @ hw.transpose(1, 0, 2).reshape(n, Q * d_out))
                    z = z.reshape(n, Q, d_out).transpose(1, 0, 2)
                z += h @ a[f"{pre}{l}.W_self"]
                z += a[f"{pre}{l}.bias"][0]
                h = np.maximum(z, 0.0, out=z)
            h_tilde.append(h + ve[r][-1])
        scores = []
        for r, ht in enumerate(h_tilde):
            sw = ht.sum(axis=1) @ a[f"att{r}.W"]
            scores.append(np.tanh(np.einsum("qnd,qd->qn", ht, sw)))
        scores = np.stack(scores, axis=2)
        scores -= scores.max(axis=2, keepdims=True)
        alpha = np.exp(scores)
        alpha /= alpha.sum(axis=2, keepdims=True)
        zeta = sum(alpha[:, :, r, None] * ht for r, ht in enumerate(h_tilde))
        hidden = np.maximum(zeta @ a["head.W1"] + a["head.b1"][0], 0.0)
        logit = (hidden @ a["head.W2"])[:, :, 0] + a["head.b2"][0, 0]
        out[lo:lo + len(block)] = ad._sigmoid(logit)
    return out


# -- checkpoints ---------------------------------------------------------------

def save_checkpoint(path, params: ModelParams, config: TrainConfig, node_labels=None,
                    extra: dict | None = None) -> None:
    """Write a versioned JSON checkpoint.

    Floats are written with ``repr`` so every 64-bit value round-trips exactly.
    """
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config": config.to_dict(),
        "dims": params.dims(),
        "node_labels": None if node_labels is None else list(node_labels),
        "arrays": {k: {"shape": list(v.shape), "data": v.reshape(-1).tolist()}
                   for k, v in params.arrays.items()},
    }
    if extra:
        doc["extra"] = extra
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)


def load_checkpoint(path):
    """Return ``(params, config, node_labels, extra)``."""
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from None
    if not isinstance(doc, dict) or doc.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{path}: not a checkpoint file")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"{path}: checkpoint version {doc.get('version')!r}, expected {CHECKPOINT_VERSION}"
        )
    try:
        config = TrainConfig.from_dict(doc["config"])
        arrays = {}
        for k, rec in doc["arrays"].items():
            arr = np.asarray(rec["data"], dtype=np.float64).reshape(rec["shape"])
            arrays[k] = arr
        params = ModelParams(arrays, **doc["dims"])
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"{path}: corrupt checkpoint ({exc})") from None
    expected = init_params(params.layer_count, params.feature_dim, config.replace(
        hidden_dim=params.hidden_dim, out_dim=params.out_dim, head_dim=params.head_dim,
        depth=params.depth), np.random.default_rng(0))
    for k, v in expected.arrays.items():
        if k not in arrays or arrays[k].shape != v.shape:
            raise CheckpointError(f"{path}: missing or misshapen array {k!r}")
    labels = doc.get("node_labels")
    return params, config, None if labels is None else tuple(labels), doc.get("extra", {})
