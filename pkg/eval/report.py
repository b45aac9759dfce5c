"""Evaluation reports: AUC with CI, operating point, per-fold spread and paired comparisons."""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from eval.roc import RocCurve, roc_curve, sens_spec
from eval.stats import bootstrap_auc_ci, delong_test, mcnemar_test
from utils.artifacts import atomic_write_bytes, atomic_write_text, csv_stamp
from utils.errors import DegenerateVarianceError
from utils.logger import RiskLogger, warn
from utils.plotting import fmt4, new_figure, render_svg


@dataclass
class Comparison:
    """Paired tests of the report's score against another score on the same rows."""

    name: str
    auc: float
    delong: Optional[dict] = None
    delong_error: Optional[str] = None
    mcnemar: Optional[dict] = None

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "auc": self.auc,
            "delong": self.delong,
            "delong_error": self.delong_error,
            "mcnemar": self.mcnemar,
        }


@dataclass
class EvalReport:
    """Held-out evaluation of one score."""

    name: str
    n: int
    n_positive: int
    auc: float
    ci: tuple
    ci_method: str
    operating_point: dict
    roc: RocCurve
    fold_aucs: List[float] = field(default_factory=list)
    comparisons: List[Comparison] = field(default_factory=list)
    scores: Optional[np.ndarray] = field(default=None, repr=False)
    labels: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def sensitivity(self) -> float:
        return self.operating_point["sensitivity"]

    @property
    def specificity(self) -> float:
        return self.operating_point["specificity"]

    def fold_summary(self) -> Optional[dict]:
        if not self.fold_aucs:
            return None
        sd = float(np.std(self.fold_aucs, ddof=1)) if len(self.fold_aucs) > 1 else 0.0
        return {"mean": float(np.mean(self.fold_aucs)), "sd": sd, "folds": list(self.fold_aucs)}

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "n": self.n,
            "n_positive": self.n_positive,
            "auc": self.auc,
            "ci": {"lower": self.ci[0], "upper": self.ci[1], "level": 0.95, "method": self.ci_method},
            "operating_point": self.operating_point,
            "cv_auc": self.fold_summary(),
            "comparisons": [comparison.to_dict() for comparison in self.comparisons],
        }

    def headline(self) -> str:
        return f"AUC={self.auc:.2f} (95% CI:{self.ci[0]:.2f}-{self.ci[1]:.2f})"


def evaluate_scores(
    scores: Sequence[float],
    labels: Sequence[int],
    name: str = "model",
    n_boot: int = 1000,
    seed: int = 0,
    fold_aucs: Optional[Sequence[float]] = None,
    threshold: Optional[float] = None,
) -> EvalReport:
    """ROC, bootstrap CI and the Youden operating point of one score."""
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels, dtype=np.int64)
    curve = roc_curve(s, y)
    lower, upper = bootstrap_auc_ci(s, y, n_boot=n_boot, seed=seed)
    # Percentile bounds can miss the point estimate on tiny samples
    lower, upper = min(lower, curve.auc), max(upper, curve.auc)
    point = sens_spec(s, y, threshold)
    report = EvalReport(
        name=name,
        n=int(y.size),
        n_positive=int(y.sum()),
        auc=curve.auc,
        ci=(lower, upper),
        ci_method=f"stratified percentile bootstrap (n_boot={n_boot})",
        operating_point=point.to_dict(),
        roc=curve,
        fold_aucs=list(fold_aucs or []),
        scores=s,
        labels=y,
    )
    RiskLogger.log_operation("evaluate_scores", "success", {"name": name, "auc": curve.auc, "ci": [lower, upper]})
    return report


def compare_reports(report: EvalReport, other: EvalReport) -> Comparison:
    """DeLong on the two scores and McNemar on their Youden-threshold predictions."""
    comparison = Comparison(name=other.name, auc=other.auc)
    try:
        comparison.delong = delong_test(report.scores, other.scores, report.labels).to_dict()
    except DegenerateVarianceError as e:
        comparison.delong_error = str(e)
        warn("compare_reports", "DeLong test not applicable", other=other.name, reason=str(e))
    pred_a = (report.scores >= report.operating_point["threshold"]).astype(int)
    pred_b = (other.scores >= other.operating_point["threshold"]).astype(int)
    comparison.mcnemar = mcnemar_test(pred_a, pred_b, report.labels).to_dict()
    report.comparisons.append(comparison)
    return comparison


def write_roc_csv(path: Path, curves: Dict[str, RocCurve], config_hash: Optional[str] = None) -> Path:
    """``curve,threshold,fpr,tpr`` rows for every curve."""
    lines = ["curve,threshold,fpr,tpr"]
    for name, curve in curves.items():
        lines.extend(f"{name},{row}" for row in curve.to_csv_rows())
    return atomic_write_text(path, csv_stamp(config_hash) + "\n".join(lines) + "\n")


def write_roc_svg(path: Path, curves: Dict[str, RocCurve], config_hash: Optional[str] = None) -> Path:
    """ROC curves with an AUC legend, chance diagonal included."""
    fig, ax = new_figure(5.0, 5.0)
    ax.plot([0, 1], [0, 1], linestyle="--", color="0.6", linewidth=0.8)
    for name, curve in curves.items():
        ax.plot(curve.fpr, curve.tpr, linewidth=1.4, label=f"{name} (AUC={fmt4(curve.auc)})")
    ax.set_xlim(0, 1)
    ax.set_ylim(0, 1)
    ax.set_xlabel("False positive rate")
    ax.set_ylabel("True positive rate")
    ax.legend(loc="lower right")
    return atomic_write_bytes(path, render_svg(fig, config_hash))
