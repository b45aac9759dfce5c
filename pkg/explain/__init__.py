"""Shapley attribution: exact, tree and linear methods, importances and explanation artifacts."""

from explain.attribution import Attribution, linear_shap, select_background, shapley_exact_attribution
from explain.exact import shapley_exact
from explain.interactions import InteractionMatrix, interaction_values
from explain.tree_shap import tree_shap
from explain.importance import ImportanceRanking, SubgroupImportance, feature_importance, subgroup_importance
from explain.artifacts import Explanation, dependence_data, explain_model, force_explanation, summary_data

__all__ = [
    "Attribution",
    "linear_shap",
    "select_background",
    "shapley_exact_attribution",
    "shapley_exact",
    "InteractionMatrix",
    "interaction_values",
    "tree_shap",
    "ImportanceRanking",
    "SubgroupImportance",
    "feature_importance",
    "subgroup_importance",
    "Explanation",
    "dependence_data",
    "explain_model",
    "force_explanation",
    "summary_data",
]
