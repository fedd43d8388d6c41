"""Per-view graph encoders.

Both encoders use the same propagation rule.  For node ``u`` in view ``r``::

    h_u' = dropout(relu(h_u W_self + sum_{v in N_r(u)} h_v W_neigh / sqrt(p_u p_v) + b))

with ``p = deg + 1``.  The bias is added once per node, whatever its degree.

The view encoder starts from node features.  The query encoder starts from
the one-hot query column, and from its second layer on its input is its
own previous output plus the view encoder's output at the same depth.
"""

from __future__ import annotations

from typing import NamedTuple, Sequence

import numpy as np

from . import autodiff as ad
from .graph import MultiplexGraph


class EncoderLayer(NamedTuple):
    W_self: ad.Value
    W_neigh: ad.Value
    bias: ad.Value


def _check_layers(layers: Sequence[EncoderLayer], d_in: int):
    for i, layer in enumerate(layers):
        if layer.W_self.shape != layer.W_neigh.shape:
            raise ValueError(f"layer {i}: W_self and W_neigh shapes differ")
        if layer.W_self.shape[0] != d_in:
            raise ValueError(f"layer {i}: expects input width {layer.W_self.shape[0]}, got {d_in}")
        if layer.bias.shape != (1, layer.W_self.shape[1]):
            raise ValueError(f"layer {i}: bias shape {layer.bias.shape}")
        d_in = layer.W_self.shape[1]


def propagate(h, g: MultiplexGraph, r: int, layer: EncoderLayer,
              dropout_rate=0.0, training=False, rng=None) -> ad.Value:
    """One encoder layer in view ``r``."""
    h = ad.as_value(h)
    if h.shape[1] != layer.W_self.shape[0]:
        raise ValueError(f"input width {h.shape[1]} != layer width {layer.W_self.shape[0]}")
    z = ad.graph_conv(h, layer.W_self, layer.W_neigh, layer.bias,
                      g.propagation_operator(r), symmetric=True)
    return ad.relu_dropout(z, dropout_rate, training, rng)


def propagate_reference(h, g: MultiplexGraph, r: int, layer: EncoderLayer,
                        dropout_rate=0.0, training=False, rng=None) -> ad.Value:
    """:func:`propagate` composed from primitive ops (used to cross-check)."""
    h = ad.as_value(h)
    neigh = ad.neighbor_aggregate(h, g, r) @ layer.W_neigh
    z = ad.add(ad.add(h @ layer.W_self, neigh), layer.bias)
    return ad.dropout(ad.relu(z), dropout_rate, training, rng)


def view_encoder_forward(g, X, r, layers, dropout_rate=0.0, training=False, rng=None):
    """Return the output of every view-encoder layer for view ``r``."""
    X = ad.as_value(X)
    if X.shape[0] != g.node_count:
        raise ValueError("feature rows must equal node_count")
    _check_layers(layers, X.shape[1])
    outs, h = [], X
    for layer in layers:
        h = propagate(h, g, r, layer, dropout_rate, training, rng)
        outs.append(h)
    return outs


def query_encoder_forward(g, c_q, r, ve_outputs, layers, dropout_rate=0.0,
                          training=False, rng=None) -> ad.Value:
    """Final query-encoder output for view ``r``.

    ``ve_outputs`` are the per-layer outputs of the view encoder for the
    same view; layer ``l + 1`` of the query encoder consumes
    ``qe_l + ve_l``.
    """
    c = np.asarray(c_q, dtype=np.float64).reshape(-1, 1)
    if c.shape[0] != g.node_count:
        raise ValueError("query vector length must equal node_count")
    if len(ve_outputs) < len(layers) - 1:
        raise ValueError("not enough view-encoder outputs for the query encoder depth")
    _check_layers(layers[:1], 1)
    h = propagate(c, g, r, layers[0], dropout_rate, training, rng)
    for depth, layer in enumerate(layers[1:]):
        ve = ve_outputs[depth]
        if ve.shape != h.shape:
            raise ValueError(
                f"query encoder layer {depth} output {h.shape} cannot be combined with "
                f"view encoder output {ve.shape}"
            )
        h = propagate(ad.add(h, ve), g, r, layer, dropout_rate, training, rng)
    return h


def encode_all_views(g, X, c_q, view_layers, query_layers, dropout_rate=0.0,
                     training=False, rng=None, ve_cache=None):
    """Per-view fused embeddings ``view_out + query_out``.

    ``ve_cache`` may hold precomputed view-encoder outputs (they do not
    depend on the query), which inference reuses across queries.
    """
    L = g.layer_count
    if len(view_layers) != L or len(query_layers) != L:
        raise ValueError(f"need encoder parameters for all {L} views")
    fused = []
    for r in range(L):
        if ve_cache is not None:
            ve = ve_cache[r]
        else:
            ve = view_encoder_forward(g, X, r, view_layers[r], dropout_rate, training, rng)
        qe = query_encoder_forward(g, c_q, r, ve, query_layers[r], dropout_rate, training, rng)
        fused.append(ad.add(ve[-1], qe))
    return fused
