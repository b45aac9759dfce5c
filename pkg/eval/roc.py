"""ROC curves, AUC and threshold metrics."""

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.stats import rankdata
from sklearn import metrics

from utils.errors import ValidationError
from utils.validators import validate_finite, validate_labels


@dataclass
class RocCurve:
    """ROC points over every distinct score threshold (score >= threshold is positive)."""

    thresholds: np.ndarray
    fpr: np.ndarray
    tpr: np.ndarray
    auc: float

    def to_dict(self) -> dict:
        return {
            "auc": self.auc,
            "points": [
                {"threshold": _json_threshold(t), "fpr": float(f), "tpr": float(r)}
                for t, f, r in zip(self.thresholds, self.fpr, self.tpr)
            ],
        }

    def to_csv_rows(self):
        for t, f, r in zip(self.thresholds, self.fpr, self.tpr):
            yield f"{_json_threshold(t)},{float(f)!r},{float(r)!r}"


def _json_threshold(value: float):
    return "inf" if np.isinf(value) else float(value)


def _checked(scores, labels):
    y = validate_labels(labels)
    s = validate_finite(scores, "scores")
    if s.shape != y.shape:
        raise ValidationError(f"scores and labels differ in length ({s.size} vs {y.size})", field="scores")
    return s, y


def roc_curve(scores: Sequence[float], labels: Sequence[int]) -> RocCurve:
    """ROC curve with equal scores grouped into one (diagonal) step.

    Raises:
        SingleClassError: Only one class in ``labels``
    """
    s, y = _checked(scores, labels)
    fpr, tpr, thresholds = metrics.roc_curve(y, s, drop_intermediate=False)
    thresholds = np.where(np.arange(thresholds.size) == 0, np.inf, thresholds)
    return RocCurve(thresholds=thresholds, fpr=fpr, tpr=tpr, auc=float(metrics.auc(fpr, tpr)))


def auc_score(scores: Sequence[float], labels: Sequence[int]) -> float:
    """Mann-Whitney AUC from midranks (ties count one half)."""
    s, y = _checked(scores, labels)
    ranks = rankdata(s)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    return float((ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


@dataclass(frozen=True)
class SensSpec:
    sensitivity: float
    specificity: float
    threshold: float
    youden: float
    rule: str

    def to_dict(self) -> dict:
        return {
            "sensitivity": self.sensitivity,
            "specificity": self.specificity,
            "threshold": self.threshold,
            "youden_j": self.youden,
            "threshold_rule": self.rule,
        }


def youden_threshold(scores: Sequence[float], labels: Sequence[int]) -> float:
    """Finite threshold maximizing tpr - fpr (first one on ties)."""
    curve = roc_curve(scores, labels)
    finite = np.isfinite(curve.thresholds)
    j = np.where(finite, curve.tpr - curve.fpr, -np.inf)
    return float(curve.thresholds[int(np.argmax(j))])


def sens_spec(scores: Sequence[float], labels: Sequence[int], threshold: Optional[float] = None) -> SensSpec:
    """Sensitivity and specificity at ``threshold`` (Youden J when omitted)."""
    s, y = _checked(scores, labels)
    rule = "fixed"
    if threshold is None:
        threshold = youden_threshold(s, y)
        rule = "youden"
    predicted = s >= threshold
    sensitivity = float(predicted[y == 1].mean())
    specificity = float((~predicted[y == 0]).mean())
    return SensSpec(sensitivity, specificity, float(threshold), sensitivity + specificity - 1.0, rule)
