"""Bootstrap AUC intervals and the paired DeLong and McNemar tests."""

from dataclasses import asdict, dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from eval.roc import auc_score
from utils.errors import DegenerateVarianceError, ValidationError
from utils.seeding import BOOTSTRAP, make_rng
from utils.validators import validate_finite, validate_labels

MIN_BOOT = 200
DEGENERATE_VARIANCE = 1e-12


def bootstrap_auc_ci(
    scores: Sequence[float],
    labels: Sequence[int],
    n_boot: int = 1000,
    seed: int = 0,
    level: float = 0.95,
) -> Tuple[float, float]:
    """Percentile CI of the AUC from stratified bootstrap resamples.

    Positives and negatives are resampled separately, so every resample holds
    both classes.

    Raises:
        ValidationError: n_boot < 200 or fewer than 2 rows of a class
    """
    if n_boot < MIN_BOOT:
        raise ValidationError(f"n_boot must be >= {MIN_BOOT}, got {n_boot}", field="n_boot")
    y = validate_labels(labels)
    s = validate_finite(scores, "scores")
    positives = s[y == 1]
    negatives = s[y == 0]
    if positives.size < 2 or negatives.size < 2:
        raise ValidationError("Too few rows per class to bootstrap the AUC", field="labels")

    rng = make_rng(seed, BOOTSTRAP)
    resample_labels = np.concatenate([np.ones(positives.size), np.zeros(negatives.size)])
    aucs = np.empty(n_boot)
    for b in range(n_boot):
        pos = positives[rng.integers(0, positives.size, positives.size)]
        neg = negatives[rng.integers(0, negatives.size, negatives.size)]
        aucs[b] = auc_score(np.concatenate([pos, neg]), resample_labels)
    tail = 100.0 * (1.0 - level) / 2.0
    lower, upper = np.percentile(aucs, [tail, 100.0 - tail])
    return float(lower), float(upper)


@dataclass(frozen=True)
class DeLongResult:
    auc_a: float
    auc_b: float
    z: float
    p_value: float
    variance: float

    def to_dict(self) -> dict:
        return asdict(self)


def _structural_components(scores: np.ndarray, y: np.ndarray):
    """Per-positive and per-negative placement values from midranks."""
    positives = scores[y == 1]
    negatives = scores[y == 0]
    n_pos, n_neg = positives.size, negatives.size
    combined = stats.rankdata(np.concatenate([positives, negatives]))
    rank_pos = stats.rankdata(positives)
    rank_neg = stats.rankdata(negatives)
    v10 = (combined[:n_pos] - rank_pos) / n_neg
    v01 = 1.0 - (combined[n_pos:] - rank_neg) / n_pos
    return v10, v01


def delong_test(scores_a: Sequence[float], scores_b: Sequence[float], labels: Sequence[int]) -> DeLongResult:
    """Paired comparison of two correlated AUCs.

    Raises:
        DegenerateVarianceError: Variance of the AUC difference below 1e-12
    """
    y = validate_labels(labels)
    a = validate_finite(scores_a, "scores_a")
    b = validate_finite(scores_b, "scores_b")
    if a.shape != y.shape or b.shape != y.shape:
        raise ValidationError("Paired scores and labels must have equal length", field="scores")
    v10_a, v01_a = _structural_components(a, y)
    v10_b, v01_b = _structural_components(b, y)
    auc_a, auc_b = float(v10_a.mean()), float(v10_b.mean())
    s10 = np.cov(np.vstack([v10_a, v10_b]), ddof=1)
    s01 = np.cov(np.vstack([v01_a, v01_b]), ddof=1)
    covariance = s10 / v10_a.size + s01 / v01_a.size
    contrast = np.array([1.0, -1.0])
    variance = float(contrast @ covariance @ contrast)
    if not variance >= DEGENERATE_VARIANCE:
        raise DegenerateVarianceError(
            "degenerate variance: curves identical or nearly so "
            f"(AUC {auc_a:.4f} vs {auc_b:.4f}, variance {variance:.3g})"
        )
    z = (auc_a - auc_b) / np.sqrt(variance)
    p_value = float(2.0 * stats.norm.sf(abs(z)))
    return DeLongResult(auc_a=auc_a, auc_b=auc_b, z=float(z), p_value=p_value, variance=variance)


@dataclass(frozen=True)
class McNemarResult:
    b: int
    c: int
    statistic: float
    p_value: float
    method: str

    def to_dict(self) -> dict:
        return asdict(self)


def mcnemar_test(
    pred_a: Sequence[int],
    pred_b: Sequence[int],
    labels: Sequence[int],
    exact: Optional[bool] = None,
) -> McNemarResult:
    """McNemar test on the discordant errors of two paired classifiers.

    ``b`` counts rows only A gets wrong, ``c`` rows only B gets wrong. The reported
    statistic is always the continuity-corrected ``(|b - c| - 1)^2 / (b + c)``; the
    p-value is the exact two-sided binomial when ``b + c < 25`` (or ``exact=True``)
    and the 1-df chi-square tail otherwise.
    """
    y = validate_labels(labels, require_both=False)
    a = validate_labels(pred_a, require_both=False, field="pred_a")
    b_pred = validate_labels(pred_b, require_both=False, field="pred_b")
    if a.shape != y.shape or b_pred.shape != y.shape:
        raise ValidationError("Paired predictions and labels must have equal length", field="pred_a")
    a_right, b_right = a == y, b_pred == y
    b = int((~a_right & b_right).sum())
    c = int((a_right & ~b_right).sum())
    if b + c == 0:
        return McNemarResult(b=0, c=0, statistic=0.0, p_value=1.0, method="none")
    statistic = float((abs(b - c) - 1) ** 2 / (b + c))
    use_exact = (b + c < 25) if exact is None else exact
    if use_exact:
        p_value = float(min(1.0, 2.0 * stats.binom.cdf(min(b, c), b + c, 0.5)))
        method = "exact-binomial"
    else:
        p_value = float(stats.chi2.sf(statistic, df=1))
        method = "chi-square-corrected"
    return McNemarResult(b=b, c=c, statistic=statistic, p_value=p_value, method=method)
