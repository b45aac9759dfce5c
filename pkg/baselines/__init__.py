"""Clinical baselines: the GRACE point score and Cox regression for marker cross-checks."""

from baselines.cox import CoxFit, fit_cox
from baselines.grace import GraceInput, GracePointTable, grace_eval, grace_score, load_grace_table
from baselines.markers import MarkerComparison, compare_markers, subgroup_comparison

__all__ = [
    "CoxFit",
    "fit_cox",
    "GraceInput",
    "GracePointTable",
    "grace_eval",
    "grace_score",
    "load_grace_table",
    "MarkerComparison",
    "compare_markers",
    "subgroup_comparison",
]
