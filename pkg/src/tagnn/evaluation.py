"""Rank-based AUC and macro-AUC over classes pooled across snapshots."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np


def average_ranks(x: np.ndarray) -> np.ndarray:
    """1-based ranks with ties resolved to the group average."""
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    order = np.argsort(x, kind="mergesort")
    sorted_x = x[order]
    is_start = np.concatenate([[True], sorted_x[1:] != sorted_x[:-1]])
    group = np.cumsum(is_start) - 1
    starts = np.nonzero(is_start)[0]
    counts = np.diff(np.concatenate([starts, [n]]))
    avg = starts + (counts + 1) / 2.0  # mean of ranks starts+1 .. starts+count
    ranks = np.empty(n)
    ranks[order] = avg[group]
    return ranks


def binary_auc(scores, labels) -> float | None:
    """Mann-Whitney AUC: P(score_pos > score_neg), ties counted half.

    Returns None (undefined) with a warning when only one class is present.
    """
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = int(labels.shape[0] - n_pos)
    if n_pos == 0 or n_neg == 0:
        warnings.warn("AUC undefined: need at least one positive and one negative")
        return None
    ranks = average_ranks(scores)
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


@dataclass
class EvalReport:
    macro_auc: float
    per_class_auc: list[float | None]
    n_examples: int
    config: dict | None = field(default=None)

    def to_dict(self) -> dict:
        return {
            "macro_auc": self.macro_auc,
            "per_class_auc": self.per_class_auc,
            "n_examples": self.n_examples,
            "config": self.config,
        }


def _one_vs_rest_aucs(probs: np.ndarray, labels: np.ndarray, n_classes: int) -> list[float | None]:
    return [binary_auc(probs[:, c], (labels == c).astype(int)) for c in range(n_classes)]


def macro_auc(
    probs: np.ndarray,
    labels: np.ndarray,
    eval_set: np.ndarray | None = None,
    per_step: bool = False,
    n_nodes: int | None = None,
    config: dict | None = None,
) -> EvalReport:
    """One-vs-rest AUC per class, unweighted mean over defined classes.

    By default all evaluation node-times are pooled per class; ``per_step``
    instead averages per-(class, snapshot) AUCs, which needs ``eval_set``
    node-time indices plus ``n_nodes`` to recover snapshot membership.
    Classes whose AUC is undefined are excluded (warning); it is an error if
    every class is undefined.
    """
    probs = np.asarray(probs, dtype=float)
    labels = np.asarray(labels)
    if eval_set is not None and probs.shape[0] != eval_set.shape[0]:
        probs = probs[eval_set]
        labels = labels[eval_set]
    if probs.ndim != 2:
        raise ValueError("probabilities must be a (n, C) matrix")
    row_sums = probs.sum(axis=1)
    if np.any(np.abs(row_sums - 1.0) > 1e-6):
        raise ValueError("probability rows must sum to 1 within 1e-6")
    n_classes = probs.shape[1]

    if per_step:
        if eval_set is None or n_nodes is None:
            raise ValueError("per-step averaging needs eval_set and n_nodes")
        steps = eval_set // n_nodes
        per_class: list[float | None] = []
        for c in range(n_classes):
            vals = []
            for t in np.unique(steps):
                sel = steps == t
                auc = binary_auc(probs[sel, c], (labels[sel] == c).astype(int))
                if auc is not None:
                    vals.append(auc)
            per_class.append(float(np.mean(vals)) if vals else None)
    else:
        per_class = _one_vs_rest_aucs(probs, labels, n_classes)

    defined = [a for a in per_class if a is not None]
    if not defined:
        raise ValueError("macro-AUC undefined: no class has both positives and negatives")
    if len(defined) < n_classes:
        warnings.warn(f"{n_classes - len(defined)} of {n_classes} class AUCs undefined; excluded")
    return EvalReport(float(np.mean(defined)), per_class, int(labels.shape[0]), config)
