"""Evaluation metrics with multi-task masking."""

from __future__ import annotations

import numpy as np
from scipy.stats import rankdata

from mmsg.errors import AllMasked, EmptyBatch, ShapeMismatch, SingleClass


def roc_auc(scores, labels) -> float:
    """P(score_pos > score_neg) + 0.5 P(tie), via the Mann-Whitney rank sum."""
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels).ravel()
    if s.shape != y.shape:
        raise ShapeMismatch(f"{s.size} scores vs {y.size} labels")
    pos = y == 1
    n_pos = int(pos.sum())
    n_neg = int(y.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise SingleClass("ROC-AUC needs at least one positive and one negative label")
    # average ranks are multiples of 1/2, so 2*rank is an exact integer
    twice = np.rint(2 * rankdata(s, method="average")).astype(np.int64)
    u_twice = int(twice[pos].sum()) - n_pos * (n_pos + 1)
    return u_twice / (2 * n_pos * n_neg)


def rmse(preds, targets) -> float:
    p = np.asarray(preds, dtype=np.float64).ravel()
    t = np.asarray(targets, dtype=np.float64).ravel()
    if p.shape != t.shape:
        raise ShapeMismatch(f"{p.size} predictions vs {t.size} targets")
    if p.size == 0:
        raise EmptyBatch("RMSE of an empty set")
    return float(np.sqrt(np.mean((p - t) ** 2)))


def masked_task_metric(preds: np.ndarray, labels: np.ndarray, mask: np.ndarray, task_type: str) -> float:
    """Average over tasks of ROC-AUC (classification) or RMSE (regression).

    Each task uses only its unmasked rows. Classification tasks with a single
    class present are skipped; if every task is skipped SingleClass is raised.
    """
    preds = np.asarray(preds, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if preds.ndim == 1:
        preds, labels, mask = preds[:, None], labels[:, None], mask[:, None]
    if not preds.shape == labels.shape == mask.shape:
        raise ShapeMismatch(f"preds {preds.shape}, labels {labels.shape}, mask {mask.shape}")
    if not mask.any():
        raise AllMasked("no labelled entries to evaluate")
    values = []
    for k in range(preds.shape[1]):
        m = mask[:, k]
        if not m.any():
            continue
        if task_type == "classification":
            try:
                values.append(roc_auc(preds[m, k], labels[m, k]))
            except SingleClass:
                continue
        else:
            values.append(rmse(preds[m, k], labels[m, k]))
    if not values:
        raise SingleClass("no task has both classes present")
    return float(np.mean(values))


def higher_is_better(task_type: str) -> bool:
    return task_type == "classification"


def metric_name(task_type: str) -> str:
    return "roc_auc" if task_type == "classification" else "rmse"
