"""Rank-based link prediction metrics: ROC-AUC and average precision."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata


@dataclass(frozen=True)
class Metrics:
    """AUC and AP for one evaluation; both lie in [0, 1]."""

    auc: float
    ap: float


def auc_score(scores, labels) -> float:
    """P(score_pos > score_neg) + 0.5 P(tie), via the Mann-Whitney rank statistic."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs at least one positive and one negative")
    ranks = rankdata(scores, method="average")
    return float((ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def average_precision(scores, labels) -> float:
    """Area under the precision-recall sweep.

    Items are visited in descending score order with ties broken by input
    order (stable sort); each positive hit contributes its precision, and
    the mean over positives is the AP.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    n_pos = int(labels.sum())
    if n_pos == 0:
        raise ValueError("AP needs at least one positive")
    order = np.argsort(-scores, kind="stable")
    hits = labels[order]
    cum_pos = np.cumsum(hits)
    precision = cum_pos / np.arange(1, labels.size + 1)
    return float(precision[hits].sum() / n_pos)


def evaluate_scores(pos_scores, neg_scores) -> Metrics:
    pos_scores = np.asarray(pos_scores, dtype=np.float64)
    neg_scores = np.asarray(neg_scores, dtype=np.float64)
    if pos_scores.size == 0 or neg_scores.size == 0:
        raise ValueError("need non-empty positive and negative score lists")
    scores = np.concatenate([pos_scores, neg_scores])
    labels = np.concatenate([np.ones(pos_scores.size), np.zeros(neg_scores.size)])
    return Metrics(auc=auc_score(scores, labels), ap=average_precision(scores, labels))


def summarize_runs(runs: list[Metrics]) -> dict:
    """Aggregate per-seed metrics into {mean, std, per_seed} for AUC and AP."""
    if not runs:
        raise ValueError("no runs to summarize")
    aucs = np.array([m.auc for m in runs])
    aps = np.array([m.ap for m in runs])
    return {
        "auc": {"mean": float(aucs.mean()), "std": float(aucs.std()),
                "per_seed": [float(x) for x in aucs]},
        "ap": {"mean": float(aps.mean()), "std": float(aps.std()),
               "per_seed": [float(x) for x in aps]},
    }
