"""Cross-validation, grid search, ROC analysis and paired statistical tests."""

from eval.folds import CvPlan, stratified_folds
from eval.grid import Grid, GridReport, grid_search
from eval.report import EvalReport, compare_reports, evaluate_scores
from eval.roc import RocCurve, auc_score, roc_curve, sens_spec
from eval.stats import bootstrap_auc_ci, delong_test, mcnemar_test

__all__ = [
    "CvPlan",
    "stratified_folds",
    "Grid",
    "GridReport",
    "grid_search",
    "EvalReport",
    "compare_reports",
    "evaluate_scores",
    "RocCurve",
    "auc_score",
    "roc_curve",
    "sens_spec",
    "bootstrap_auc_ci",
    "delong_test",
    "mcnemar_test",
]
