"""Membership classifier and training objective."""

from __future__ import annotations

from typing import NamedTuple, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import bce_loss


class HeadParams(NamedTuple):
    W1: ad.Value
    b1: ad.Value
    W2: ad.Value
    b2: ad.Value


def head_forward(zeta, params: HeadParams) -> ad.Value:
    """``sigmoid(relu(zeta W1 + b1) W2 + b2)`` as an ``n x 1`` column."""
    hidden = ad.relu(ad.add(ad.as_value(zeta) @ params.W1, params.b1))
    logit = ad.add(hidden @ params.W2, params.b2)
    if not np.isfinite(logit.data).all():
        raise FloatingPointError("non-finite activations in the membership head")
    return ad.sigmoid(logit)


def total_loss(losses: Sequence):
    """Sum of per-query losses; accepts floats or :class:`Value` scalars."""
    losses = list(losses)
    if not losses:
        raise ValueError("total_loss of an empty list")
    if all(isinstance(x, ad.Value) for x in losses):
        return ad.total(losses)
    return float(sum(float(x.item() if isinstance(x, ad.Value) else x) for x in losses))


__all__ = ["HeadParams", "bce_loss", "head_forward", "total_loss"]
