"""
Binary classification metrics on positive-class scores.
"""
import logging

import numba
import numpy as np
import scipy.stats

from .collections import dotdict
from .exceptions import ContractError

THRESHOLD = 0.5
METRICS = ["accuracy", "precision", "auroc", "auprc"]


class ScoredLabels:
    """Positive-class scores together with binary labels."""

    def __init__(self, scores, labels):
        self.scores = np.asarray(scores, dtype=np.float64).ravel()
        self.labels = np.asarray(labels).ravel().astype(int)
        if len(self.scores) != len(self.labels):
            raise ContractError(f"{len(self.scores)} scores but {len(self.labels)} labels.")
        if not np.isin(self.labels, [0, 1]).all():
            raise ContractError("Labels must be 0 or 1.")

    def __len__(self):
        return len(self.labels)

    @property
    def nPositive(self):
        return int(self.labels.sum())

    @property
    def nNegative(self):
        return len(self) - self.nPositive


def _nonEmpty(scored):
    if len(scored) == 0:
        raise ContractError("Metrics need at least one sample.")


def accuracy(scored, threshold=THRESHOLD):
    """Fraction of samples with (score >= threshold) == label."""
    _nonEmpty(scored)
    return float(np.mean((scored.scores >= threshold).astype(int) == scored.labels))


def precision(scored, threshold=THRESHOLD):
    """TP / (TP + FP); 0 if nothing is predicted positive."""
    _nonEmpty(scored)
    predicted = scored.scores >= threshold
    if not predicted.any():
        return 0.0
    return float(scored.labels[predicted].sum() / predicted.sum())


def auroc(scored):
    """Area under the ROC curve as the Mann-Whitney statistic, ties counting one half.

    :param scored: Scores and labels with both classes present
    :type scored: ScoredLabels
    :rtype: float
    """
    nPos, nNeg = scored.nPositive, scored.nNegative
    if nPos == 0 or nNeg == 0:
        raise ContractError("AUROC needs at least one positive and one negative sample.")
    ranks = scipy.stats.rankdata(scored.scores)
    # average ranks are half-integers, the sum below is exact
    u = ranks[scored.labels == 1].sum() - nPos * (nPos + 1) / 2.0
    return float(u / (nPos * nNeg))


@numba.njit
def _step_precision_recall_numba(sortedScores, sortedLabels, nPos):
    area = 0.0
    seen = 0
    truePos = 0
    groupPos = 0
    n = len(sortedScores)
    for i in range(n):
        seen += 1
        truePos += sortedLabels[i]
        groupPos += sortedLabels[i]
        # tied scores enter the sweep together
        if i == n - 1 or sortedScores[i] != sortedScores[i + 1]:
            area += (truePos / seen) * groupPos
            groupPos = 0
    return area / nPos


def auprc(scored):
    """Area under the precision-recall curve from a descending-score sweep with step
    interpolation (each recall increment is weighted with the precision at its
    threshold).

    :param scored: Scores and labels with at least one positive
    :type scored: ScoredLabels
    :rtype: float
    """
    if scored.nPositive == 0:
        raise ContractError("AUPRC needs at least one positive sample.")
    order = np.argsort(-scored.scores, kind="stable")
    return float(
        _step_precision_recall_numba(
            np.ascontiguousarray(scored.scores[order]),
            np.ascontiguousarray(scored.labels[order].astype(np.int64)),
            scored.nPositive,
        )
    )


def evaluate(probs, labels, threshold=THRESHOLD):
    """All metrics of class probabilities `probs` (samples x classes).

    For two classes the positive class is column 1. With more classes only the
    argmax accuracy is defined and the other metrics are NaN. If the labels contain a
    single class, AUROC and AUPRC are NaN where undefined.

    :return: accuracy, precision, auroc, auprc
    :rtype: dotdict
    """
    probs = np.atleast_2d(np.asarray(probs, dtype=np.float64))
    labels = np.asarray(labels).astype(int)
    result = dotdict({m: np.nan for m in METRICS})
    if len(labels) == 0:
        raise ContractError("Cannot evaluate an empty set.")
    if probs.shape[1] != 2:
        result.accuracy = float(np.mean(np.argmax(probs, axis=1) == labels))
        return result

    scored = ScoredLabels(probs[:, 1], labels)
    result.accuracy = accuracy(scored, threshold)
    result.precision = precision(scored, threshold)
    if scored.nPositive > 0 and scored.nNegative > 0:
        result.auroc = auroc(scored)
    else:
        logging.warning("Evaluation set has a single class, AUROC is undefined.")
    if scored.nPositive > 0:
        result.auprc = auprc(scored)
    return result
