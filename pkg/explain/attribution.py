"""Per-row Shapley attributions and the background sample they are measured against."""

import io
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np
import pandas as pd

from cohort.matrix import FeatureMatrix
from explain.exact import MAX_EXACT_FEATURES, shapley_exact
from models.base import TrainedModel
from utils.artifacts import atomic_write_text, csv_stamp, strip_comment_lines
from utils.errors import ColumnMismatchError, ValidationError
from utils.logger import RiskLogger
from utils.parallel import ordered_map
from utils.seeding import BACKGROUND, make_rng

# Local accuracy tolerance per method
TOLERANCE = {"exact": 1e-6, "linear": 1e-6, "tree": 1e-4}


@dataclass
class Attribution:
    """Shapley values of every explained row, in the model's margin space.

    ``values`` and ``feature_values`` are n x p; feature values are de-standardized
    for display while the model consumed the standardized rows.
    """

    base_value: float
    values: np.ndarray
    feature_values: np.ndarray
    columns: List[str]
    row_ids: List[str]
    background_ref: dict = field(default_factory=dict)
    method: str = "exact"
    sex: Optional[np.ndarray] = None
    age: Optional[np.ndarray] = None

    @classmethod
    def from_matrix(
        cls,
        matrix: FeatureMatrix,
        values: np.ndarray,
        base_value: float,
        method: str,
        background_ref: Optional[dict] = None,
    ) -> "Attribution":
        values = np.asarray(values, dtype=float).reshape(matrix.n_rows, matrix.n_cols)
        return cls(
            base_value=float(base_value),
            values=values,
            feature_values=matrix.raw_values(),
            columns=matrix.column_names,
            row_ids=list(matrix.episode_ids),
            background_ref=dict(background_ref or {}),
            method=method,
            sex=np.asarray(matrix.sex, dtype=object),
            age=np.asarray(matrix.age, dtype=float),
        )

    @property
    def n_rows(self) -> int:
        return int(self.values.shape[0])

    @property
    def n_cols(self) -> int:
        return int(self.values.shape[1])

    @property
    def tolerance(self) -> float:
        return TOLERANCE.get(self.method, 1e-6)

    def outputs(self) -> np.ndarray:
        """base + sum of contributions, per row."""
        return self.base_value + self.values.sum(axis=1)

    def column_index(self, name: str) -> int:
        try:
            return self.columns.index(name)
        except ValueError:
            raise ValidationError(f"Unknown column '{name}'", field=name)

    def take(self, rows) -> "Attribution":
        """Row subset (boolean mask or indices)."""
        rows = np.asarray(rows)
        idx = np.flatnonzero(rows) if rows.dtype == bool else rows.astype(np.int64)
        return replace(
            self,
            values=self.values[idx],
            feature_values=self.feature_values[idx],
            row_ids=[self.row_ids[i] for i in idx],
            sex=None if self.sex is None else self.sex[idx],
            age=None if self.age is None else self.age[idx],
        )

    def local_accuracy_error(self, model: TrainedModel, matrix: FeatureMatrix) -> float:
        """Largest |base + sum(phi) - raw output| over the explained rows."""
        if matrix.n_rows != self.n_rows:
            raise ValidationError("Matrix rows differ from attribution rows", field="matrix")
        if self.n_rows == 0:
            return 0.0
        return float(np.max(np.abs(self.outputs() - model.raw_output(matrix))))

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.values, columns=self.columns)
        frame.insert(0, "base_value", self.base_value)
        frame.insert(0, "episode_id", self.row_ids)
        return frame

    def to_csv_text(self, config_hash: Optional[str] = None) -> str:
        """Attribution matrix as CSV: one row per episode, one column per feature."""
        buffer = io.StringIO()
        self.to_frame().to_csv(buffer, index=False, lineterminator="\n", float_format="%.10g")
        return csv_stamp(config_hash) + buffer.getvalue()

    def write_csv(self, path: Path, config_hash: Optional[str] = None) -> Path:
        return atomic_write_text(path, self.to_csv_text(config_hash))

    @classmethod
    def read_csv(cls, path: Path, matrix: FeatureMatrix, method: str = "exact") -> "Attribution":
        """Reload an attribution CSV, taking display values and tags from ``matrix``.

        Rows are matched by episode id; the CSV's column set must equal the matrix's.
        """
        text = strip_comment_lines(Path(path).read_text(encoding="utf-8"))
        frame = pd.read_csv(io.StringIO(text), dtype={"episode_id": str})
        columns = [name for name in frame.columns if name not in ("episode_id", "base_value")]
        if columns != matrix.column_names:
            missing = sorted(set(matrix.column_names) - set(columns))
            extra = sorted(set(columns) - set(matrix.column_names))
            raise ColumnMismatchError(
                f"Attribution columns differ from the matrix: missing={missing} extra={extra}",
                missing=missing, extra=extra
            )
        position = {episode_id: i for i, episode_id in enumerate(matrix.episode_ids)}
        try:
            rows = [position[episode_id] for episode_id in frame["episode_id"]]
        except KeyError as e:
            raise ValidationError(f"Attribution row {e.args[0]} is not in the cohort", field="episode_id")
        base = float(frame["base_value"].iloc[0]) if len(frame) else 0.0
        return cls.from_matrix(matrix.take(rows), frame[columns].to_numpy(dtype=float), base, method)


def select_background(matrix: FeatureMatrix, size: int = 100, seed: int = 0) -> Tuple[FeatureMatrix, dict]:
    """Seeded sample of reference rows (all rows when the matrix is smaller than ``size``).

    Returns:
        The background matrix (rows in original order) and its reference record
    """
    if matrix.n_rows == 0:
        raise ValidationError("Cannot draw a background sample from an empty matrix", field="background")
    if size < 1:
        raise ValidationError(f"background size must be >= 1, got {size}", field="background_size")
    if size >= matrix.n_rows:
        rows = np.arange(matrix.n_rows)
    else:
        rng = make_rng(seed, BACKGROUND)
        rows = np.sort(rng.choice(matrix.n_rows, size=size, replace=False))
    ref = {"id": f"sample:{BACKGROUND}:{seed}", "seed": seed, "size": int(rows.size)}
    return matrix.take(rows), ref


def background_rows(background) -> np.ndarray:
    rows = background.rows if isinstance(background, FeatureMatrix) else np.asarray(background, dtype=float)
    if rows.ndim != 2 or rows.shape[0] == 0:
        raise ValidationError("Background sample must be a non-empty 2-D array", field="background")
    return rows


def linear_shap(
    model: TrainedModel,
    matrix: FeatureMatrix,
    background,
    background_ref: Optional[dict] = None,
) -> Attribution:
    """Closed-form attribution of a linear margin: phi_j = w_j (x_j - mean_background_j).

    For the SVM the explained output is the Platt-scaled margin, so the weights are ``a * coef``.
    """
    if model.is_tree_ensemble:
        raise ValidationError("linear_shap needs a linear model, use tree_shap", field="model")
    bg = background_rows(background)
    coef = np.asarray(model.coef, dtype=float)
    if model.platt is not None:
        coef = model.platt[0] * coef
    values = (matrix.rows - bg.mean(axis=0)) * coef
    base_value = float(model.raw_output(bg).mean())
    return Attribution.from_matrix(
        matrix, values, base_value, method="linear",
        background_ref=background_ref or {"id": "explicit", "size": int(bg.shape[0])},
    )


def shapley_exact_attribution(
    model,
    matrix: FeatureMatrix,
    background,
    threads: int = 1,
    background_ref: Optional[dict] = None,
) -> Attribution:
    """Exact enumeration for every row of ``matrix`` (at most 20 columns)."""
    if matrix.n_cols > MAX_EXACT_FEATURES:
        raise ValidationError(
            f"Exact Shapley values support at most {MAX_EXACT_FEATURES} features (got {matrix.n_cols}); "
            "use tree_shap for tree ensembles",
            field="features"
        )
    start = time.time()
    bg = background_rows(background)
    results = ordered_map(lambda i: shapley_exact(model, matrix.rows[i], bg), range(matrix.n_rows), threads)
    if results:
        values = np.vstack([phi for phi, _ in results])
        base_value = results[0][1]
    else:
        values = np.zeros((0, matrix.n_cols))
        base_value = float(np.mean(model.raw_output(bg))) if isinstance(model, TrainedModel) else 0.0
    RiskLogger.log_performance("shapley_exact", (time.time() - start) * 1000, {
        "rows": matrix.n_rows, "features": matrix.n_cols,
    })
    return Attribution.from_matrix(
        matrix, values, base_value, method="exact",
        background_ref=background_ref or {"id": "explicit", "size": int(bg.shape[0])},
    )
