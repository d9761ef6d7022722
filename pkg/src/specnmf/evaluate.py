"""Confusion matrices and classification statistics."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .errors import InputError

__all__ = [
    "ConfusionMatrix",
    "confusion",
    "accuracy",
    "precision",
    "recall",
    "resolve_truth",
    "misclassification_stats",
    "metrics_report",
]

BACKGROUND = "background"
DEFAULT_PRESENCE_THRESHOLD = 0.05


@dataclass(frozen=True)
class ConfusionMatrix:
    """Rows are truth, columns are prediction."""

    labels: tuple
    counts: np.ndarray

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def index(self, label) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise InputError(f"unknown class {label!r}") from None

    def row_normalized(self) -> np.ndarray:
        rows = self.counts.sum(axis=1, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(rows > 0, self.counts / np.where(rows > 0, rows, 1), 0.0)

    def to_csv(self, normalized=False) -> str:
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(["truth\\predicted", *self.labels])
        values = self.row_normalized() if normalized else self.counts
        for label, row in zip(self.labels, values):
            writer.writerow([label, *(repr(float(v)) if normalized else int(v) for v in row)])
        return out.getvalue()


def confusion(truths, predictions, labels=None) -> ConfusionMatrix:
    """Count (truth, prediction) pairs. Label order is the sorted union unless given."""
    truths, predictions = list(truths), list(predictions)
    if len(truths) != len(predictions):
        raise InputError(f"{len(truths)} truths but {len(predictions)} predictions")
    if not truths:
        raise InputError("nothing to evaluate")
    if labels is None:
        labels = sorted(set(truths) | set(predictions))
    labels = tuple(labels)
    index = {label: i for i, label in enumerate(labels)}
    counts = np.zeros((len(labels), len(labels)), dtype=np.int64)
    for t, p in zip(truths, predictions):
        counts[index[t], index[p]] += 1
    return ConfusionMatrix(labels, counts)


def accuracy(cm: ConfusionMatrix) -> float:
    return float(np.trace(cm.counts) / cm.total)


def precision(cm: ConfusionMatrix, label) -> float | None:
    """TP / (TP + FP); ``None`` when the class is never predicted."""
    i = cm.index(label)
    predicted = cm.counts[:, i].sum()
    return None if predicted == 0 else float(cm.counts[i, i] / predicted)


def recall(cm: ConfusionMatrix, label) -> float | None:
    """TP / (TP + FN); ``None`` when the class never occurs in the truth."""
    i = cm.index(label)
    actual = cm.counts[i, :].sum()
    return None if actual == 0 else float(cm.counts[i, i] / actual)


def resolve_truth(
    truth_labels,
    predicted: str,
    weights: dict | None = None,
    presence_threshold: float = DEFAULT_PRESENCE_THRESHOLD,
    background: str = BACKGROUND,
) -> str:
    """Map a (possibly multi-label) truth onto one label for a single-label prediction.

    The background is treated as the carrier of any isotope it accompanies,
    so it only counts as truth for pure-background spectra. Among the
    remaining labels, a prediction is a hit when it names one whose share
    (``weights``, if known) reaches ``presence_threshold``. Otherwise the
    truth is the dominant label: largest weight, or without weights the first
    candidate in sorted order.
    """
    labels = set(truth_labels)
    candidates = labels - {background} or labels
    if weights is not None:
        present = {l for l in candidates if weights.get(l, 0.0) >= presence_threshold}
    else:
        present = candidates
    if predicted in present:
        return predicted
    if weights is not None:
        return max(sorted(candidates), key=lambda l: weights.get(l, 0.0))
    return sorted(candidates)[0]


def misclassification_stats(results, truths, labels, background: str = BACKGROUND) -> dict:
    """Per-class error counts, error breakdown and mean shares.

    ``results`` are AnalysisResults, ``truths`` the resolved truth labels and
    ``labels`` the model's class order (the share axes).
    """
    results, truths = list(results), list(truths)
    if not results:
        raise InputError("no results")
    if len(results) != len(truths):
        raise InputError(f"{len(truths)} truths for {len(results)} results")
    per_class = {}
    breakdown = {}
    share_sums = {}
    share_counts = {}
    isotope_pairs = False
    for r, t in zip(results, truths):
        p = r.predicted_label
        entry = per_class.setdefault(t, {"count": 0, "misclassified": 0, "rate": 0.0, "predicted_as": {}})
        entry["count"] += 1
        entry["predicted_as"][p] = entry["predicted_as"].get(p, 0) + 1
        if p != t:
            entry["misclassified"] += 1
            breakdown.setdefault(t, {})
            breakdown[t][p] = breakdown[t].get(p, 0) + 1
            if background not in (p, t) and p != "undetermined":
                isotope_pairs = True
        if r.shares is not None:
            share_sums[t] = share_sums.get(t, 0.0) + np.asarray(r.shares)
            share_counts[t] = share_counts.get(t, 0) + 1
    for entry in per_class.values():
        entry["rate"] = entry["misclassified"] / entry["count"]
    mean_shares = {
        t: {label: float(v) for label, v in zip(labels, share_sums[t] / share_counts[t])}
        for t in sorted(share_sums)
    }
    return {
        "per_class": {t: per_class[t] for t in sorted(per_class)},
        "breakdown": {t: breakdown[t] for t in sorted(breakdown)},
        "mean_shares": mean_shares,
        "isotope_isotope_confusions_present": isotope_pairs,
    }


def metrics_report(cm: ConfusionMatrix) -> dict:
    return {
        "accuracy": accuracy(cm),
        "total": cm.total,
        "labels": list(cm.labels),
        "per_class": {
            label: {"precision": precision(cm, label), "recall": recall(cm, label)} for label in cm.labels
        },
    }
