"""Learner dispatch."""

from typing import Optional, Sequence

from models.base import TrainedModel
from models.boosting import fit_gbt
from models.config import ModelConfig
from models.forest import fit_random_forest
from models.linear import fit_linear_svm, fit_logistic
from models.weights import ClassWeights, class_weights


def fit_model(
    config: ModelConfig,
    matrix,
    labels: Sequence[int],
    weights: Optional[ClassWeights] = None,
    threads: int = 1,
) -> TrainedModel:
    """Fit the learner named by ``config.learner`` with class weights from ``labels``."""
    weights = weights or class_weights(labels)
    if config.learner == "LR":
        return fit_logistic(matrix, labels, weights, config)
    if config.learner == "SVM":
        return fit_linear_svm(matrix, labels, weights, config)
    if config.learner == "RF":
        return fit_random_forest(matrix, labels, weights, config, threads=threads)
    return fit_gbt(matrix, labels, weights, config, threads=threads)
