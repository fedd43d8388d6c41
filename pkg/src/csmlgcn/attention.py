"""Node-level attention over views."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from . import autodiff as ad


@dataclass
class FusionOutput:
    zeta: ad.Value
    alpha: ad.Value
    summaries: list


def view_summary(h) -> ad.Value:
    """Sum of a view's node embeddings, as a ``1 x d`` row."""
    return ad.sum_rows(h)


def attention_scores(h_tilde: Sequence, W_att: Sequence) -> tuple:
    """``tanh(s_r^T W_r h_u)`` for every node and view, shape ``n x L``.

    Returns ``(scores, summaries)``.
    """
    if len(h_tilde) != len(W_att):
        raise ValueError("one attention matrix per view is required")
    if not h_tilde:
        raise ValueError("at least one view is required")
    shape = h_tilde[0].shape
    cols, summaries = [], []
    for h, W in zip(h_tilde, W_att):
        if h.shape != shape:
            raise ValueError("all views must have embeddings of the same shape")
        if W.shape != (shape[1], shape[1]):
            raise ValueError(f"attention matrix shape {W.shape} does not match width {shape[1]}")
        s = view_summary(h)
        summaries.append(s)
        cols.append(ad.tanh(h @ ad.transpose(s @ W)))
    return ad.hstack(cols), summaries


def fuse(h_tilde: Sequence, W_att: Sequence) -> FusionOutput:
    """Softmax the per-view scores of every node and mix its view
    embeddings with the resulting weights."""
    scores, summaries = attention_scores(h_tilde, W_att)
    alpha = ad.softmax_rows(scores)
    zeta = ad.total(ad.mul(ad.column(alpha, r), h) for r, h in enumerate(h_tilde))
    return FusionOutput(zeta, alpha, summaries)
