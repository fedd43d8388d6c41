from __future__ import annotations


def precision_recall_f1(pred, truth) -> tuple[float, float, float]:
    pred, truth = set(pred), set(truth)
    if not truth:
        raise ValueError("ground-truth community is empty")
    hit = len(pred & truth)
    if not pred or hit == 0:
        return (0.0 if not pred else hit / len(pred)), hit / len(truth), 0.0
    p = hit / len(pred)
    r = hit / len(truth)
    return p, r, 2 * p * r / (p + r)


def f1_score(pred, truth) -> float:
    """F1 between a predicted and a ground-truth node set."""
    return precision_recall_f1(pred, truth)[2]
