"""Ranking metrics and the per-feature attention-weight report."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["MetricReport", "AttentionReport", "auroc", "auprc", "attention_report"]


@dataclass(frozen=True)
class MetricReport:
    auroc: float
    auprc: float
    n_normal: int
    n_anomalous: int
    score_kind: str

    def tsv(self) -> str:
        return (
            f"{self.score_kind}\t{self.auroc:.6f}\t{self.auprc:.6f}"
            f"\t{self.n_normal}\t{self.n_anomalous}"
        )


def _validate(scores, labels):
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.ndim != 1 or scores.shape != labels.shape:
        raise ValueError(
            f"scores shape {scores.shape} and labels shape {labels.shape} must be equal 1-D"
        )
    if not np.all((labels == 0) | (labels == 1)):
        raise ValueError("labels must be 0/1")
    return scores, labels.astype(np.int64)


def auroc(scores, labels) -> float:
    """Probability a random positive outranks a random negative; ties earn 1/2.

    Computed via the rank-sum statistic with midranks, which equals exact
    pair counting.
    """
    scores, labels = _validate(scores, labels)
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError(f"auroc needs both classes, got {n_pos} positives / {n_neg} negatives")
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(len(scores))
    sorted_scores = scores[order]
    i = 0
    rank = 1
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        midrank = 0.5 * (rank + rank + (j - i))
        ranks[order[i : j + 1]] = midrank
        rank += j - i + 1
        i = j + 1
    u = ranks[labels == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def auprc(scores, labels) -> float:
    """Area under precision-recall via rectangles at achievable thresholds.

    Thresholds sweep the sorted unique scores from high to low; each new
    recall level contributes (delta recall) * (precision there), with no
    interpolation.
    """
    scores, labels = _validate(scores, labels)
    n_pos = int(labels.sum())
    if n_pos == 0:
        raise ValueError("auprc needs at least one positive label")
    order = np.argsort(-scores, kind="mergesort")
    sorted_labels = labels[order]
    sorted_scores = scores[order]
    area = 0.0
    prev_recall = 0.0
    tp = 0
    seen = 0
    i = 0
    n = len(scores)
    while i < n:
        j = i
        while j + 1 < n and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        tp += int(sorted_labels[i : j + 1].sum())
        seen += j - i + 1
        recall = tp / n_pos
        precision = tp / seen
        area += (recall - prev_recall) * precision
        prev_recall = recall
        i = j + 1
    return float(area)


@dataclass(frozen=True)
class AttentionReport:
    """Mean/std of each feature's attention weight over a sample set.

    ``top10_by_weight`` restricts to the samples where that feature's own
    weight is highest (top decile); ``top10_by_value`` restricts to the
    samples where the feature's raw value is highest.  Both aggregations
    are reported because either reading of "top 10%" is defensible.
    """

    schema: tuple
    entire_mean: np.ndarray
    entire_std: np.ndarray
    top10_by_weight_mean: np.ndarray
    top10_by_weight_std: np.ndarray
    top10_by_value_mean: np.ndarray
    top10_by_value_std: np.ndarray
    n_samples: int

    def tsv(self) -> str:
        lines = [
            "feature\tentire_mean\tentire_std\ttop10w_mean\ttop10w_std"
            "\ttop10v_mean\ttop10v_std"
        ]
        for i, name in enumerate(self.schema):
            lines.append(
                f"{name}\t{self.entire_mean[i]:.6f}\t{self.entire_std[i]:.6f}"
                f"\t{self.top10_by_weight_mean[i]:.6f}\t{self.top10_by_weight_std[i]:.6f}"
                f"\t{self.top10_by_value_mean[i]:.6f}\t{self.top10_by_value_std[i]:.6f}"
            )
        return "\n".join(lines)


def attention_report(weights: np.ndarray, values: np.ndarray, schema) -> AttentionReport:
    """Aggregate per-sample attention weights (n, f) against raw values (n, f)."""
    weights = np.asarray(weights, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    schema = tuple(schema)
    n, f = weights.shape
    if values.shape != (n, f) or f != len(schema):
        raise ValueError(
            f"weights {weights.shape}, values {values.shape}, schema of {len(schema)} disagree"
        )
    if n == 0:
        raise ValueError("attention report needs at least one sample")
    if not np.allclose(weights.sum(axis=1), 1.0, atol=1e-6) or np.any(weights < -1e-12):
        raise ValueError("per-sample weights must be probability vectors")

    k = max(1, int(np.ceil(0.1 * n)))

    def top_stats(key: np.ndarray):
        means = np.empty(f)
        stds = np.empty(f)
        for j in range(f):
            idx = np.argsort(-key[:, j], kind="mergesort")[:k]
            sel = weights[idx, j]
            means[j] = sel.mean()
            stds[j] = sel.std()
        return means, stds

    w_mean, w_std = top_stats(weights)
    v_mean, v_std = top_stats(values)
    return AttentionReport(
        schema=schema,
        entire_mean=weights.mean(axis=0),
        entire_std=weights.std(axis=0),
        top10_by_weight_mean=w_mean,
        top10_by_weight_std=w_std,
        top10_by_value_mean=v_mean,
        top10_by_value_std=v_std,
        n_samples=n,
    )
