"""Class-weighted learners: logistic regression, linear SVM, random forest, boosted trees."""

from models.base import TrainedModel
from models.boosting import fit_gbt
from models.config import ModelConfig, model_config_from_dict, paper_grid
from models.forest import fit_random_forest
from models.linear import fit_linear_svm, fit_logistic
from models.weights import ClassWeights, class_weights
from models.zoo import fit_model

__all__ = [
    "TrainedModel",
    "ModelConfig",
    "model_config_from_dict",
    "paper_grid",
    "ClassWeights",
    "class_weights",
    "fit_logistic",
    "fit_linear_svm",
    "fit_random_forest",
    "fit_gbt",
    "fit_model",
]
