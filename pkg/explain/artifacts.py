"""Explanation artifacts: method dispatch, summary/dependence point clouds and force explanations."""

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from cohort.matrix import FeatureMatrix
from explain.attribution import (
    Attribution,
    background_rows,
    linear_shap,
    shapley_exact_attribution,
)
from explain.exact import shapley_exact
from explain.importance import feature_importance
from explain.interactions import MAX_INTERACTION_FEATURES, interaction_values
from explain.tree_shap import tree_shap, tree_shap_values
from models.base import TrainedModel
from utils.errors import ValidationError
from utils.logger import RiskLogger
from utils.seeding import EXPLAIN, make_rng

# Above this many distinct values the dependence heuristic groups x_j into quantile bins
_MAX_EXACT_GROUPS = 20
_QUANTILE_BINS = 10
_TIE = 1e-9


def explain_model(
    model: TrainedModel,
    matrix: FeatureMatrix,
    background,
    threads: int = 1,
    background_ref: Optional[dict] = None,
) -> Attribution:
    """Attribution with the fastest exact method for the model kind."""
    if model.is_tree_ensemble:
        attribution = tree_shap(model, matrix, background, threads, background_ref)
    elif model.coef is not None:
        attribution = linear_shap(model, matrix, background, background_ref)
    else:
        attribution = shapley_exact_attribution(model, matrix, background, threads, background_ref)
    RiskLogger.log_operation("explain_model", "success", {
        "learner": model.learner, "method": attribution.method,
        "rows": attribution.n_rows, "background": attribution.background_ref,
    })
    return attribution


def _row_values(model: TrainedModel, row: np.ndarray, bg: np.ndarray):
    if model.is_tree_ensemble:
        values, base = tree_shap_values(model, row[None, :], bg)
        return values[0], base
    if model.coef is not None:
        coef = np.asarray(model.coef, dtype=float)
        if model.platt is not None:
            coef = model.platt[0] * coef
        return (row - bg.mean(axis=0)) * coef, float(model.raw_output(bg).mean())
    return shapley_exact(model, row, bg)


def _normalized(values: np.ndarray) -> np.ndarray:
    low, high = float(np.min(values)), float(np.max(values))
    if high - low <= 0:
        return np.full(values.shape, 0.5)
    return (values - low) / (high - low)


def summary_data(attribution: Attribution, top_k: Optional[int] = None) -> dict:
    """Per-feature point clouds ordered by importance.

    Each point is (row id, phi, raw value min-max normalized to [0, 1]); a feature with
    a constant raw value gets color 0.5.
    """
    ranking = feature_importance(attribution)
    features = []
    for j in ranking.order[:top_k]:
        color = _normalized(attribution.feature_values[:, j]) if attribution.n_rows else np.zeros(0)
        features.append({
            "column": attribution.columns[j],
            "importance": float(ranking.importance[j]),
            "points": [
                {"row_id": row_id, "phi": float(phi), "color": float(c)}
                for row_id, phi, c in zip(attribution.row_ids, attribution.values[:, j], color)
            ],
        })
    return {
        "kind": "summary",
        "method": attribution.method,
        "base_value": attribution.base_value,
        "n_rows": attribution.n_rows,
        "top_k": top_k,
        "features": features,
    }


def _groups(x: np.ndarray) -> np.ndarray:
    if np.unique(x).size <= _MAX_EXACT_GROUPS:
        return np.unique(x, return_inverse=True)[1]
    return pd.qcut(x, q=_QUANTILE_BINS, labels=False, duplicates="drop").astype(np.int64)


def residual_binning_scores(attribution: Attribution, j: int) -> np.ndarray:
    """Interaction strength of every feature with ``j``, estimated from the attribution alone.

    phi_j is centred within groups of equal x_j (quantile bins when x_j has many values);
    what is left over is interaction. Feature k scores the group-size weighted mean of
    |corr(residual, x_k)| over groups of three or more rows; a group where
    either side is constant contributes zero.
    """
    x = attribution.feature_values[:, j]
    phi = attribution.values[:, j]
    groups = _groups(x)
    scores = np.zeros(attribution.n_cols)
    for k in range(attribution.n_cols):
        if k == j:
            continue
        weighted, total = 0.0, 0
        for g in np.unique(groups):
            mask = groups == g
            if mask.sum() < 3:
                continue
            residual = phi[mask] - phi[mask].mean()
            other = attribution.feature_values[mask, k]
            if residual.std() < 1e-12 or other.std() < 1e-12:
                total += int(mask.sum())
                continue
            weighted += mask.sum() * abs(np.corrcoef(residual, other)[0, 1])
            total += int(mask.sum())
        scores[k] = weighted / total if total else 0.0
    return scores


def exact_interaction_scores(
    model: TrainedModel,
    matrix: FeatureMatrix,
    background,
    j: int,
    max_rows: int = 50,
    seed: int = 0,
) -> np.ndarray:
    """Mean |Phi_jk| over a seeded sample of at most ``max_rows`` rows."""
    bg = background_rows(background)
    rows = np.arange(matrix.n_rows)
    if rows.size > max_rows:
        rows = np.sort(make_rng(seed, EXPLAIN).choice(rows.size, size=max_rows, replace=False))
    scores = np.zeros(matrix.n_cols)
    for i in rows:
        scores += np.abs(interaction_values(model, matrix.rows[i], bg).values[j])
    scores /= max(rows.size, 1)
    scores[j] = 0.0
    return scores


def _strongest(scores: np.ndarray, j: int) -> Optional[int]:
    candidates = [k for k in range(scores.size) if k != j]
    if not candidates:
        return None
    best = max(scores[k] for k in candidates)
    return next(k for k in candidates if scores[k] >= best - _TIE)


def dependence_data(
    attribution: Attribution,
    feature: Union[int, str],
    model: Optional[TrainedModel] = None,
    matrix: Optional[FeatureMatrix] = None,
    background=None,
    max_rows: int = 50,
    seed: int = 0,
) -> dict:
    """Points (raw x_j, phi_j, raw color-feature value) for one feature.

    The color feature is the one interacting most with ``feature``: exact interaction
    values when a model, its matrix and a background are given and there are at most 12
    columns, the residual-binning estimate otherwise. Ties go to the lowest column index.
    """
    j = attribution.column_index(feature) if isinstance(feature, str) else int(feature)
    if not 0 <= j < attribution.n_cols:
        raise ValidationError(f"Feature index {j} out of range", field="feature")

    exact = (
        model is not None and matrix is not None and background is not None
        and attribution.n_cols <= MAX_INTERACTION_FEATURES
    )
    if attribution.n_cols == 2:
        scores, color_method = np.zeros(2), "only-other-feature"
    elif exact:
        scores, color_method = exact_interaction_scores(model, matrix, background, j, max_rows, seed), "exact-interactions"
    else:
        scores, color_method = residual_binning_scores(attribution, j), "residual-binning"
    k = _strongest(scores, j)

    color = attribution.feature_values[:, k] if k is not None else np.full(attribution.n_rows, np.nan)
    return {
        "kind": "dependence",
        "feature": attribution.columns[j],
        "color_feature": attribution.columns[k] if k is not None else None,
        "color_method": color_method if k is not None else "none",
        "scores": {
            attribution.columns[c]: float(scores[c]) for c in range(attribution.n_cols) if c != j
        },
        "points": [
            {
                "row_id": row_id,
                "x": float(x),
                "phi": float(phi),
                "color": None if np.isnan(c) else float(c),
            }
            for row_id, x, phi, c in zip(
                attribution.row_ids, attribution.feature_values[:, j], attribution.values[:, j], color
            )
        ],
    }


@dataclass
class Contribution:
    column: str
    value: float
    phi: float

    def to_dict(self) -> dict:
        return {"column": self.column, "value": self.value, "phi": self.phi}


@dataclass
class Explanation:
    """One patient's prediction split into signed feature contributions."""

    row_id: Optional[str]
    base_value: float
    output_value: float
    contributions: List[Contribution] = field(default_factory=list)

    def residual(self) -> float:
        """|output - base - sum(phi)|; zero up to rounding."""
        return abs(self.output_value - self.base_value - sum(c.phi for c in self.contributions))

    def headline(self) -> str:
        return f"base value={self.base_value:.2f}, output value={self.output_value:.2f}"

    def to_dict(self) -> dict:
        return {
            "kind": "force",
            "row_id": self.row_id,
            "base_value": self.base_value,
            "output_value": self.output_value,
            "headline": self.headline(),
            "contributions": [c.to_dict() for c in self.contributions],
        }


def force_explanation(
    model: TrainedModel,
    row,
    background,
    columns: Optional[Sequence[str]] = None,
    raw_row: Optional[Sequence[float]] = None,
    row_id: Optional[str] = None,
) -> Explanation:
    """Contributions of one row sorted by |phi| descending; zero contributions are dropped.

    ``row`` is a standardized vector or a one-row FeatureMatrix (which also supplies
    the column names, raw display values and episode id).
    """
    if isinstance(row, FeatureMatrix):
        if row.n_rows != 1:
            raise ValidationError(f"force_explanation takes one row, got {row.n_rows}", field="row")
        columns = columns or row.column_names
        raw_row = raw_row if raw_row is not None else row.raw_values()[0]
        row_id = row_id or row.episode_ids[0]
        x = row.rows[0]
    else:
        x = np.asarray(row, dtype=float).ravel()
    columns = list(columns or model.columns)
    raw_row = np.asarray(raw_row if raw_row is not None else x, dtype=float)

    phi, base = _row_values(model, x, background_rows(background))
    order = sorted((j for j in range(phi.size) if phi[j] != 0.0), key=lambda j: (-abs(phi[j]), j))
    contributions = [Contribution(columns[j], float(raw_row[j]), float(phi[j])) for j in order]
    return Explanation(
        row_id=row_id,
        base_value=float(base),
        output_value=float(base + phi.sum()),
        contributions=contributions,
    )
