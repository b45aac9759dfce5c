"""Learner configuration and the hyperparameter grids of the study."""

import math
from dataclasses import asdict, dataclass, fields
from typing import Dict, List

from utils.errors import ValidationError
from utils.logger import warn

LEARNERS = ("LR", "SVM", "RF", "GBT")
PENALTIES = ("l1", "l2", "elasticnet")

COMMON_FIELDS = {"learner", "seed"}
LEARNER_FIELDS = {
    "LR": {"penalty", "C", "l1_ratio", "max_iter", "tol"},
    "SVM": {"penalty", "C", "l1_ratio", "max_iter", "tol"},
    "RF": {"n_trees", "max_depth"},
    "GBT": {
        "n_trees", "max_depth", "learning_rate", "subsample", "colsample_bytree",
        "gamma", "alpha", "reg_lambda", "dropout_rate", "min_child_weight",
    },
}

C_GRID = [10.0 ** k for k in range(-3, 4)]

PAPER_GRIDS: Dict[str, Dict[str, list]] = {
    "LR": {"penalty": ["l1", "l2", "elasticnet"], "C": C_GRID},
    "SVM": {"penalty": ["l1", "l2"], "C": C_GRID},
    "RF": {"n_trees": [50, 100, 200], "max_depth": [2, 4, 6]},
    "GBT": {
        "learning_rate": [0.05, 0.1, 0.5],
        "subsample": [0.3, 0.4, 0.8, 0.9],
        "n_trees": [50, 100, 200],
        "dropout_rate": [0.3, 0.5],
        "gamma": [10.0, 20.0, 30.0, 40.0, 50.0],
        "max_depth": [2, 4, 6],
    },
}

# Reported for the best NSTEMI model but absent from the declared tree grid
N_TREES_OVERRIDE = 250


@dataclass(frozen=True)
class ModelConfig:
    """Hyperparameters of one learner; only the learner's own fields are meaningful."""

    learner: str
    seed: int = 0
    # LR / SVM
    penalty: str = "l2"
    C: float = 1.0
    l1_ratio: float = 0.5
    max_iter: int = 5000
    tol: float = 1e-6
    # RF / GBT
    n_trees: int = 100
    max_depth: int = 4
    # GBT
    learning_rate: float = 0.1
    subsample: float = 1.0
    colsample_bytree: float = 1.0
    gamma: float = 0.0
    alpha: float = 0.0
    reg_lambda: float = 1.0
    dropout_rate: float = 0.0
    min_child_weight: float = 1.0

    def relevant_fields(self) -> set:
        return COMMON_FIELDS | LEARNER_FIELDS[self.learner]

    def to_dict(self) -> dict:
        """Only the fields relevant to the learner."""
        keep = self.relevant_fields()
        return {key: value for key, value in asdict(self).items() if key in keep}

    def validate(self) -> "ModelConfig":
        if self.learner not in LEARNERS:
            raise ValidationError(f"Unknown learner {self.learner!r}", field="learner")
        if isinstance(self.seed, bool) or not isinstance(self.seed, int) or self.seed < 0:
            raise ValidationError(f"seed must be a non-negative integer, got {self.seed!r}", field="seed")
        if self.learner in ("LR", "SVM"):
            if self.penalty not in PENALTIES:
                raise ValidationError(f"Unknown penalty {self.penalty!r}", field="penalty")
            if not (self.C > 0 and math.isfinite(self.C)):
                raise ValidationError(f"C must be a positive finite real, got {self.C}", field="C")
            if not 0 <= self.l1_ratio <= 1:
                raise ValidationError("l1_ratio must lie in [0, 1]", field="l1_ratio")
            if self.max_iter < 1 or self.tol <= 0:
                raise ValidationError("max_iter must be >= 1 and tol > 0", field="max_iter")
        else:
            if self.n_trees < 1:
                raise ValidationError(f"n_trees must be >= 1, got {self.n_trees}", field="n_trees")
            if self.max_depth < 1:
                raise ValidationError(f"max_depth must be >= 1, got {self.max_depth}", field="max_depth")
        if self.learner == "GBT":
            if not (self.learning_rate >= 0 and math.isfinite(self.learning_rate)):
                raise ValidationError("learning_rate must be a non-negative real", field="learning_rate")
            for name in ("subsample", "colsample_bytree"):
                value = getattr(self, name)
                if not 0 < value <= 1:
                    raise ValidationError(f"{name} must lie in (0, 1], got {value}", field=name)
            for name in ("gamma", "alpha", "reg_lambda", "min_child_weight"):
                value = getattr(self, name)
                if not (value >= 0 and math.isfinite(value)):
                    raise ValidationError(f"{name} must be a non-negative finite real, got {value}", field=name)
            if not 0 <= self.dropout_rate < 1:
                raise ValidationError(f"dropout_rate must lie in [0, 1), got {self.dropout_rate}", field="dropout_rate")
        return self


def model_config_from_dict(data: dict) -> ModelConfig:
    """Build a config, rejecting fields that do not belong to the learner."""
    data = dict(data)
    learner = str(data.get("learner", "")).upper()
    if learner not in LEARNERS:
        raise ValidationError(f"Unknown learner {data.get('learner')!r}", field="learner")
    data["learner"] = learner
    known = {f.name for f in fields(ModelConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ValidationError(f"Unknown model field(s): {', '.join(unknown)}", field="model")
    foreign = sorted(set(data) - COMMON_FIELDS - LEARNER_FIELDS[learner])
    if foreign:
        raise ValidationError(f"Field(s) {', '.join(foreign)} do not apply to {learner}", field="model")
    return ModelConfig(**data).validate()


def paper_grid(learner: str) -> Dict[str, list]:
    """Axes of the study's grid for a learner (``lr``, ``svm``, ``rf`` or ``gbt``)."""
    key = learner.upper()
    if key not in PAPER_GRIDS:
        raise ValidationError(f"No paper grid for learner {learner!r}", field="paper_grid")
    return {"learner": [key], **{axis: list(values) for axis, values in PAPER_GRIDS[key].items()}}


def validate_paper_legal(config: ModelConfig) -> List[str]:
    """Check grid axes against the study's grid; returns the axes held at a manual override.

    Raises:
        ValidationError: A grid axis holds a value outside the study's grid
    """
    overrides = []
    for axis, values in PAPER_GRIDS[config.learner].items():
        value = getattr(config, axis)
        if value in values:
            continue
        if axis == "n_trees" and value == N_TREES_OVERRIDE:
            warn("validate_paper_legal", "n_trees=250 is outside the declared grid; accepted as manual override")
            overrides.append(axis)
            continue
        raise ValidationError(f"{axis}={value} is outside the study grid {values}", field=axis)
    return overrides
