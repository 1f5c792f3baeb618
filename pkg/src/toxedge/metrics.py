"""Binary classification metrics matching the reporting conventions here:
precision, recall, accuracy, macro F1, weighted accuracy, ROC-AUC.

"Weighted accuracy" is implemented as balanced accuracy — the mean of
per-class recalls — and every report prints that definition.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import LabelError, ParameterError, UndefinedAucError

WEIGHTED_ACCURACY_DEFINITION = "weighted accuracy = mean of per-class recalls (balanced accuracy)"


@dataclass
class Metrics:
    """Confusion counts plus the derived rates; ``auc`` is optional."""

    confusion: np.ndarray  # [actual, predicted], 2x2
    precision: tuple[float, float]
    recall: tuple[float, float]
    f1: tuple[float, float]
    accuracy: float
    macro_f1: float
    weighted_accuracy: float
    auc: float | None = None

    def to_dict(self) -> dict:
        return {
            "confusion": [[int(c) for c in row] for row in self.confusion],
            "precision": list(self.precision),
            "recall": list(self.recall),
            "f1": list(self.f1),
            "accuracy": self.accuracy,
            "macro_f1": self.macro_f1,
            "weighted_accuracy": self.weighted_accuracy,
            "auc": self.auc,
        }


def _rate(num: float, den: float) -> float:
    return num / den if den > 0 else 0.0


def classification_metrics(labels, preds) -> Metrics:
    """Standard binary metrics; undefined per-class rates default to 0."""
    labels = list(labels)
    preds = list(preds)
    if len(labels) != len(preds):
        raise ParameterError(f"{len(labels)} labels but {len(preds)} predictions")
    if not labels:
        raise ParameterError("need at least one labeled example")
    if any(v not in (0, 1) for v in labels + preds):
        raise LabelError("labels and predictions must be 0 or 1")
    confusion = np.zeros((2, 2), dtype=np.int64)
    for a, p in zip(labels, preds):
        confusion[a, p] += 1
    precision = []
    recall = []
    f1 = []
    for c in (0, 1):
        tp = confusion[c, c]
        precision.append(_rate(tp, confusion[:, c].sum()))
        recall.append(_rate(tp, confusion[c, :].sum()))
        f1.append(_rate(2 * precision[c] * recall[c], precision[c] + recall[c]))
    accuracy = float(np.trace(confusion) / confusion.sum())
    return Metrics(
        confusion=confusion,
        precision=(precision[0], precision[1]),
        recall=(recall[0], recall[1]),
        f1=(f1[0], f1[1]),
        accuracy=accuracy,
        macro_f1=float(np.mean(f1)),
        weighted_accuracy=float(np.mean(recall)),
    )


def roc_auc(scores, labels) -> float:
    """Rank-statistic (Mann-Whitney) AUC; tied scores contribute 1/2."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ParameterError("scores and labels must be equal-length 1-D sequences")
    n_pos = int(np.sum(labels == 1))
    n_neg = int(np.sum(labels == 0))
    if n_pos == 0 or n_neg == 0:
        raise UndefinedAucError("ROC-AUC needs both classes present")
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(scores.size, dtype=np.float64)
    sorted_scores = scores[order]
    i = 0
    while i < scores.size:
        j = i
        while j + 1 < scores.size and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0  # midrank, 1-based
        i = j + 1
    rank_sum = float(ranks[labels == 1].sum())
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)
