"""Classification metrics: ROC AUC (Mann-Whitney form) and confusion-table rates."""

from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .errors import InvalidInputError, UndefinedMetricError


@dataclass
class MetricReport:
    accuracy: float
    sensitivity: float
    specificity: float
    roc_auc: float
    threshold: float
    n: int

    def rows(self):
        return [
            ("accuracy", self.accuracy),
            ("sens", self.sensitivity),
            ("spec", self.specificity),
            ("roc_auc", self.roc_auc),
        ]


def roc_auc(scores, labels):
    """Probability that a random positive outscores a random negative.

    Ties count one half (Mann-Whitney / midrank formulation).
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape:
        raise InvalidInputError("scores and labels must have the same shape")
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = labels.shape[0] - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUC needs both classes present")
    ranks = rankdata(scores)
    rank_sum = float(ranks[pos].sum())
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def confusion_metrics(probs, labels, threshold=0.5):
    """Accuracy, sensitivity (class-1 recall), specificity (class-0 recall),
    and AUC at the given probability threshold (predict 1 iff prob >= threshold)."""
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels)
    if probs.min() < 0.0 or probs.max() > 1.0:
        raise InvalidInputError("probabilities must lie in [0, 1]")
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = labels.shape[0] - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("metrics need both classes present")
    pred = probs >= threshold
    accuracy = float(np.mean(pred == pos))
    sensitivity = float(np.mean(pred[pos]))
    specificity = float(np.mean(~pred[~pos]))
    return MetricReport(
        accuracy=accuracy,
        sensitivity=sensitivity,
        specificity=specificity,
        roc_auc=roc_auc(probs, labels),
        threshold=threshold,
        n=int(labels.shape[0]),
    )
