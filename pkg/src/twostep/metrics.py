"""Confusion-matrix rates, ROC curves and AUC."""

import csv
import io
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateClass, LengthMismatch, UndefinedRate


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def n(self):
        return self.tp + self.fp + self.tn + self.fn


def _pair(pred, truth):
    pred = np.asarray(pred).astype(np.int64).ravel()
    truth = np.asarray(truth).astype(np.int64).ravel()
    if len(pred) != len(truth):
        raise LengthMismatch(f"{len(pred)} predictions for {len(truth)} labels")
    return pred, truth


def confusion(pred, truth):
    pred, truth = _pair(pred, truth)
    return ConfusionMatrix(
        tp=int(np.sum((pred == 1) & (truth == 1))),
        fp=int(np.sum((pred == 1) & (truth == 0))),
        tn=int(np.sum((pred == 0) & (truth == 0))),
        fn=int(np.sum((pred == 0) & (truth == 1))),
    )


def accuracy(cm):
    if cm.n == 0:
        raise UndefinedRate("accuracy of an empty set")
    return (cm.tp + cm.tn) / cm.n


def sensitivity(cm):
    if cm.tp + cm.fn == 0:
        raise UndefinedRate("sensitivity undefined without positives")
    return cm.tp / (cm.tp + cm.fn)


def specificity(cm):
    if cm.tn + cm.fp == 0:
        raise UndefinedRate("specificity undefined without negatives")
    return cm.tn / (cm.tn + cm.fp)


@dataclass(frozen=True, eq=False)
class RocCurve:
    fpr: np.ndarray
    tpr: np.ndarray
    auc: float

    @property
    def points(self):
        return list(zip(self.fpr.tolist(), self.tpr.tolist()))

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["fpr", "tpr"])
        for x, y in self.points:
            w.writerow([f"{x:.6f}", f"{y:.6f}"])
        return buf.getvalue()


def roc_and_auc(scores, truth):
    """ROC points from a descending threshold sweep and trapezoidal AUC.

    Subjects with equal scores enter at the same threshold, which gives the
    half-credit treatment of ties.
    """
    scores, truth = np.asarray(scores, dtype=float).ravel(), np.asarray(truth).astype(np.int64).ravel()
    if len(scores) != len(truth):
        raise LengthMismatch(f"{len(scores)} scores for {len(truth)} labels")
    n_pos = int(truth.sum())
    n_neg = len(truth) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DegenerateClass("ROC needs both classes")
    order = np.argsort(-scores, kind="mergesort")
    s, t = scores[order], truth[order]
    # last index of each group of equal scores
    ends = np.flatnonzero(np.r_[s[1:] != s[:-1], True])
    tps = np.cumsum(t)[ends]
    fps = (ends + 1) - tps
    tpr = np.r_[0.0, tps / n_pos]
    fpr = np.r_[0.0, fps / n_neg]
    auc = float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))
    return RocCurve(fpr, tpr, auc)


def summarize(pred, scores, truth):
    """Accuracy, sensitivity, specificity and AUC as a plain dict."""
    cm = confusion(pred, truth)
    return {
        "accuracy": accuracy(cm),
        "sensitivity": sensitivity(cm),
        "specificity": specificity(cm),
        "auc": roc_and_auc(scores, truth).auc,
        "confusion": {"tp": cm.tp, "fp": cm.fp, "tn": cm.tn, "fn": cm.fn},
    }
