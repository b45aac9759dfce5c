"""Fitted models: prediction in margin, probability and ranking-score space, and the model file."""

from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np
from scipy.special import expit

from cohort.matrix import FeatureMatrix, check_columns
from models.config import ModelConfig, model_config_from_dict
from models.tree import Tree
from utils.artifacts import atomic_write_json, read_json
from utils.errors import ColumnMismatchError, ModelFormatError

FORMAT_VERSION = 1


def as_design(matrix) -> Tuple[np.ndarray, Optional[List[str]], np.ndarray]:
    """Rows, column names and the active (non-constant) column mask of a design."""
    if isinstance(matrix, FeatureMatrix):
        return matrix.rows, matrix.column_names, ~matrix.constant_mask
    X = np.asarray(matrix, dtype=float)
    if X.ndim != 2:
        raise ColumnMismatchError(f"Design matrix must be 2-D, got shape {X.shape}")
    return X, None, np.ones(X.shape[1], dtype=bool)


@dataclass
class TrainedModel:
    """A fitted learner.

    Linear learners carry ``coef``/``intercept`` (plus Platt ``(a, b)`` for the SVM);
    tree ensembles carry ``trees`` whose scaled outputs add to ``base_score``.
    """

    config: ModelConfig
    columns: List[str]
    base_score: float = 0.0
    coef: Optional[np.ndarray] = None
    intercept: float = 0.0
    platt: Optional[Tuple[float, float]] = None
    trees: List[Tree] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    @property
    def learner(self) -> str:
        return self.config.learner

    @property
    def is_tree_ensemble(self) -> bool:
        return self.learner in ("RF", "GBT")

    @property
    def n_features(self) -> int:
        return len(self.columns)

    @property
    def converged(self) -> bool:
        return bool(self.metadata.get("converged", True))

    def _rows(self, matrix) -> np.ndarray:
        X, names, _ = as_design(matrix)
        if names is not None:
            check_columns(names, self.columns)
        elif X.shape[1] != self.n_features:
            raise ColumnMismatchError(
                f"Column mismatch: expected {self.n_features} columns, got {X.shape[1]}"
            )
        return X

    def raw_output(self, matrix) -> np.ndarray:
        """The additive log-odds output attributions explain.

        Tree ensembles sum their scaled leaf values onto ``base_score``; the SVM margin
        passes through its Platt map.
        """
        X = self._rows(matrix)
        if self.is_tree_ensemble:
            out = np.full(X.shape[0], self.base_score)
            for tree in self.trees:
                out += tree.predict(X)
            return out
        decision = X @ self.coef + self.intercept
        if self.platt is not None:
            a, b = self.platt
            return a * decision + b
        return decision

    def decision_function(self, matrix) -> np.ndarray:
        """Uncalibrated linear margin for LR/SVM."""
        X = self._rows(matrix)
        return X @ self.coef + self.intercept

    def predict_margin(self, matrix) -> np.ndarray:
        """Log-odds of death."""
        return self.raw_output(matrix)

    def predict_proba(self, matrix) -> np.ndarray:
        """Probability of death."""
        return expit(self.raw_output(matrix))

    def predict_score(self, matrix) -> np.ndarray:
        """Ranking score for ROC analysis (the raw SVM margin, no calibration)."""
        if self.learner == "SVM":
            return self.decision_function(matrix)
        return self.predict_margin(matrix)

    def max_depth(self) -> int:
        return max((tree.depth() for tree in self.trees), default=0)

    def to_dict(self) -> dict:
        if self.is_tree_ensemble:
            payload = {"kind": "trees", "trees": [tree.to_dict() for tree in self.trees]}
        else:
            payload = {
                "kind": "linear",
                "coef": [float(v) for v in self.coef],
                "intercept": float(self.intercept),
                "platt": None if self.platt is None else [float(v) for v in self.platt],
            }
        return {
            "format_version": FORMAT_VERSION,
            "config": self.config.to_dict(),
            "columns": list(self.columns),
            "base_score": float(self.base_score),
            "payload": payload,
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TrainedModel":
        try:
            version = data["format_version"]
            if version != FORMAT_VERSION:
                raise ModelFormatError(f"Unsupported model format_version {version!r}")
            config = model_config_from_dict(data["config"])
            payload = data["payload"]
            model = cls(
                config=config,
                columns=list(data["columns"]),
                base_score=float(data["base_score"]),
                metadata=dict(data.get("metadata", {})),
            )
            if payload["kind"] == "trees":
                model.trees = [Tree.from_dict(tree) for tree in payload["trees"]]
                for tree in model.trees:
                    if tree.n_nodes and int(tree.feature.max()) >= model.n_features:
                        raise ModelFormatError("Tree split references a column beyond the model's columns")
            else:
                model.coef = np.array(payload["coef"], dtype=float)
                model.intercept = float(payload["intercept"])
                model.platt = None if payload.get("platt") is None else tuple(payload["platt"])
                if model.coef.size != model.n_features:
                    raise ModelFormatError("Coefficient count differs from column count")
            return model
        except ModelFormatError:
            raise
        except (KeyError, TypeError, ValueError) as e:
            raise ModelFormatError(f"Malformed model document: {e}", original_error=e)

    def save(self, path: Path, config_hash: Optional[str] = None) -> Path:
        return atomic_write_json(path, self.to_dict(), config_hash)

    @classmethod
    def load(cls, path: Path) -> "TrainedModel":
        try:
            data = read_json(path)
        except (OSError, ValueError) as e:
            raise ModelFormatError(f"Cannot read model file {path}: {e}", original_error=e)
        return cls.from_dict(data)
