"""Model-ready design matrices: expansion, imputation, standardization, holdout split."""

import math
import time
from dataclasses import dataclass, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np

from cohort.episodes import RawEpisode
from cohort.spec import DYNAMIC_STATS, FeatureSpec, filter_clinical_sets, validate_feature_spec
from utils.errors import ColumnMismatchError, DegenerateSplitError, ValidationError
from utils.logger import RiskLogger
from utils.seeding import SPLIT, make_rng
from utils.validators import validate_fraction, validate_labels


@dataclass(frozen=True)
class ColumnDescriptor:
    """One derived column and the feature it traces to."""

    name: str
    source: str
    derivation: str  # value, flag, min, max, mean, level
    level: Optional[str] = None
    imputed_fraction: float = 0.0
    constant: bool = False

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "source": self.source,
            "derivation": self.derivation,
            "level": self.level,
            "imputed_fraction": self.imputed_fraction,
            "constant": self.constant,
        }


def column_layout(spec: Sequence[FeatureSpec], levels: dict) -> List[ColumnDescriptor]:
    columns = []
    for feature in spec:
        if feature.kind == "dynamic-numeric":
            for stat in DYNAMIC_STATS:
                columns.append(ColumnDescriptor(f"{feature.name}@{stat}", feature.name, stat))
        elif feature.kind == "static-categorical":
            for level in levels[feature.name]:
                columns.append(ColumnDescriptor(f"{feature.name}={level}", feature.name, "level", level=level))
        elif feature.kind == "binary-flag":
            columns.append(ColumnDescriptor(feature.name, feature.name, "flag"))
        else:
            columns.append(ColumnDescriptor(feature.name, feature.name, "value"))
    return columns


def _categorical_value(episode: RawEpisode, feature: FeatureSpec):
    if feature.is_core:
        return episode.core_value(feature.name)
    return episode.static_values.get(feature.name)


def _observed_levels(episodes: Sequence[RawEpisode], spec: Sequence[FeatureSpec]) -> dict:
    levels = {}
    for feature in spec:
        if feature.kind != "static-categorical":
            continue
        if feature.levels:
            levels[feature.name] = list(feature.levels)
        else:
            seen = {_categorical_value(e, feature) for e in episodes}
            seen.discard(None)
            levels[feature.name] = sorted(str(value) for value in seen)
    return levels


def raw_columns(
    episodes: Sequence[RawEpisode],
    spec: Sequence[FeatureSpec],
    columns: Sequence[ColumnDescriptor],
) -> np.ndarray:
    """Expand episodes into the un-imputed raw matrix (NaN marks a missing entry)."""
    by_name = {feature.name: feature for feature in spec}
    raw = np.full((len(episodes), len(columns)), np.nan)
    for i, episode in enumerate(episodes):
        for j, column in enumerate(columns):
            feature = by_name[column.source]
            if column.derivation in DYNAMIC_STATS:
                value = episode.aggregate(feature.name, column.derivation)
            elif column.derivation == "level":
                current = _categorical_value(episode, feature)
                value = None if current is None else float(str(current) == column.level)
            elif feature.is_core:
                value = episode.core_value(feature.name)
            else:
                value = episode.static_values.get(feature.name)
            if value is not None:
                raw[i, j] = float(value)
    return raw


@dataclass
class MatrixTransform:
    """Column layout plus imputation and standardization statistics.

    Fitted on one set of episodes and applied to any other, which is how the
    leakage-safe strict mode fits on the training partition only.
    """

    spec: List[FeatureSpec]
    columns: List[ColumnDescriptor]
    means: np.ndarray
    sds: np.ndarray

    @classmethod
    def fit(cls, episodes: Sequence[RawEpisode], spec: Sequence[FeatureSpec]) -> "MatrixTransform":
        """Compute column means over observed entries and the sd after mean imputation.

        Raises:
            ValidationError: A column has no observed value
        """
        spec = list(spec)
        columns = column_layout(spec, _observed_levels(episodes, spec))
        if not columns:
            raise ValidationError("Feature spec expands to zero columns", field="features")
        raw = raw_columns(episodes, spec, columns)
        observed = ~np.isnan(raw)
        means = np.zeros(len(columns))
        sds = np.zeros(len(columns))
        fitted = []
        for j, column in enumerate(columns):
            if not observed[:, j].any():
                raise ValidationError(
                    f"Feature '{column.source}' has no observed values in column '{column.name}'",
                    field=column.source
                )
            mean = float(raw[observed[:, j], j].mean())
            filled = np.where(observed[:, j], raw[:, j], mean)
            sd = float(filled.std())
            constant = sd <= 1e-12 * max(1.0, abs(mean))
            means[j] = mean
            sds[j] = 0.0 if constant else sd
            fitted.append(replace(column, constant=constant))
        return cls(spec=spec, columns=fitted, means=means, sds=sds)

    def apply(self, episodes: Sequence[RawEpisode]) -> "FeatureMatrix":
        """Impute with the fitted means and standardize with the fitted statistics."""
        raw = raw_columns(episodes, self.spec, self.columns)
        missing = np.isnan(raw)
        filled = np.where(missing, self.means, raw)
        scale = np.where(self.sds > 0, self.sds, 1.0)
        rows = (filled - self.means) / scale
        rows[:, self.sds == 0] = 0.0
        n = max(len(episodes), 1)
        columns = [
            replace(column, imputed_fraction=float(missing[:, j].sum()) / n)
            for j, column in enumerate(self.columns)
        ]
        return FeatureMatrix(
            columns=columns,
            rows=rows,
            labels=np.array([episode.label for episode in episodes], dtype=np.int64),
            episode_ids=[episode.episode_id for episode in episodes],
            sex=np.array([episode.sex for episode in episodes], dtype=object),
            age=np.array([episode.age for episode in episodes], dtype=float),
            los=np.array([episode.length_of_stay for episode in episodes], dtype=float),
            survival_time=np.array(
                [np.nan if episode.survival_time is None else episode.survival_time for episode in episodes],
                dtype=float,
            ),
            means=self.means.copy(),
            sds=self.sds.copy(),
        )


@dataclass
class FeatureMatrix:
    """Standardized design matrix with labels, subgroup tags and column metadata."""

    columns: List[ColumnDescriptor]
    rows: np.ndarray
    labels: np.ndarray
    episode_ids: List[str]
    sex: np.ndarray
    age: np.ndarray
    los: np.ndarray
    survival_time: np.ndarray
    means: np.ndarray
    sds: np.ndarray

    @property
    def column_names(self) -> List[str]:
        return [column.name for column in self.columns]

    @property
    def n_rows(self) -> int:
        return int(self.rows.shape[0])

    @property
    def n_cols(self) -> int:
        return int(self.rows.shape[1])

    @property
    def constant_mask(self) -> np.ndarray:
        return np.array([column.constant for column in self.columns], dtype=bool)

    def raw_values(self) -> np.ndarray:
        """Invert the standardization (imputed entries come back as the column mean)."""
        return self.rows * self.sds + self.means

    def column_index(self, name: str) -> int:
        try:
            return self.column_names.index(name)
        except ValueError:
            raise ValidationError(f"Unknown column '{name}'", field=name)

    def take(self, indices) -> "FeatureMatrix":
        """Row subset, keeping the standardization statistics."""
        idx = np.asarray(indices, dtype=np.int64)
        return replace(
            self,
            rows=self.rows[idx],
            labels=self.labels[idx],
            episode_ids=[self.episode_ids[i] for i in idx],
            sex=self.sex[idx],
            age=self.age[idx],
            los=self.los[idx],
            survival_time=self.survival_time[idx],
        )

    def check_columns(self, expected: Sequence[str]):
        """Raise ColumnMismatchError unless columns equal ``expected`` in order."""
        check_columns(self.column_names, expected)


def check_columns(actual: Sequence[str], expected: Sequence[str]):
    """Compare column lists, listing the difference when they disagree."""
    actual, expected = list(actual), list(expected)
    if actual == expected:
        return
    missing = [name for name in expected if name not in actual]
    extra = [name for name in actual if name not in expected]
    detail = []
    if missing:
        detail.append(f"missing {missing}")
    if extra:
        detail.append(f"extra {extra}")
    if not detail:
        detail.append("same columns in a different order")
    raise ColumnMismatchError(f"Column mismatch: {'; '.join(detail)}", missing=missing, extra=extra)


def build_matrix(
    episodes: Sequence[RawEpisode],
    spec: Sequence[FeatureSpec],
    clinical_sets: Optional[Sequence[str]] = None,
    transform: Optional[MatrixTransform] = None,
) -> FeatureMatrix:
    """Expand, impute and standardize episodes into a FeatureMatrix.

    Args:
        episodes: Cohort episodes
        spec: Feature spec
        clinical_sets: Restrict to features of these clinical sets (None = combined)
        transform: Pre-fitted statistics; fitted on ``episodes`` when omitted

    Raises:
        ValidationError: Fewer than 2 episodes, no features, or a column with no observed value
    """
    start = time.time()
    if transform is None:
        if len(episodes) < 2:
            raise ValidationError(f"build_matrix needs at least 2 episodes, got {len(episodes)}", field="episodes")
        spec = filter_clinical_sets(validate_feature_spec(spec), clinical_sets)
        transform = MatrixTransform.fit(episodes, spec)
    matrix = transform.apply(episodes)

    constant = [column.name for column in matrix.columns if column.constant]
    details = {"rows": matrix.n_rows, "columns": matrix.n_cols, "constant_columns": len(constant)}
    if clinical_sets:
        details["clinical_sets"] = list(clinical_sets)
    RiskLogger.log_operation("build_matrix", "success", details)
    RiskLogger.log_performance("build_matrix", (time.time() - start) * 1000)
    return matrix


@dataclass(frozen=True)
class SplitIndex:
    """Disjoint train/test row indices."""

    train_rows: np.ndarray
    test_rows: np.ndarray
    seed: int
    stratified: bool = False

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "stratified": self.stratified,
            "train_rows": [int(i) for i in self.train_rows],
            "test_rows": [int(i) for i in self.test_rows],
        }


def _round_half_up(value: float) -> int:
    return int(math.floor(value + 0.5))


def split_holdout(
    matrix: FeatureMatrix,
    test_fraction: float = 0.2,
    seed: int = 0,
    stratify: bool = False,
) -> SplitIndex:
    """Seeded holdout split with |test| = round-half-up(test_fraction * n).

    Raises:
        ValidationError: n < 5 or a single class
        DegenerateSplitError: A partition lost one of the classes
    """
    validate_fraction(test_fraction, "test_fraction")
    labels = validate_labels(matrix.labels)
    n = labels.size
    if n < 5:
        raise ValidationError(f"split_holdout needs at least 5 rows, got {n}", field="matrix")
    n_test = _round_half_up(test_fraction * n)
    rng = make_rng(seed, SPLIT)

    if stratify:
        positives = np.flatnonzero(labels == 1)
        negatives = np.flatnonzero(labels == 0)
        n_test_pos = min(max(_round_half_up(test_fraction * positives.size), 1), positives.size - 1, n_test - 1)
        n_test_pos = max(n_test_pos, 0)
        pos_perm = positives[rng.permutation(positives.size)]
        neg_perm = negatives[rng.permutation(negatives.size)]
        test = np.concatenate([pos_perm[:n_test_pos], neg_perm[:n_test - n_test_pos]])
        train = np.concatenate([pos_perm[n_test_pos:], neg_perm[n_test - n_test_pos:]])
    else:
        perm = rng.permutation(n)
        test, train = perm[:n_test], perm[n_test:]

    test, train = np.sort(test), np.sort(train)
    for name, part in (("train", train), ("test", test)):
        classes = set(labels[part].tolist())
        if classes != {0, 1}:
            raise DegenerateSplitError(
                f"degenerate split: the {name} partition holds only class(es) {sorted(classes)} "
                f"(seed {seed}); re-seed or use a stratified split"
            )
    RiskLogger.log_operation("split_holdout", "success", {
        "train": int(train.size), "test": int(test.size), "seed": seed, "stratified": stratify,
    })
    return SplitIndex(train_rows=train, test_rows=test, seed=seed, stratified=stratify)


def split_matrices(
    episodes: Sequence[RawEpisode],
    spec: Sequence[FeatureSpec],
    test_fraction: float,
    seed: int,
    strict: bool = False,
    clinical_sets: Optional[Sequence[str]] = None,
    stratify: bool = False,
) -> Tuple[FeatureMatrix, FeatureMatrix, SplitIndex]:
    """Build train and test matrices.

    By default imputation and standardization statistics come from the full cohort
    before the split; ``strict`` fits them on the training episodes only.
    """
    full = build_matrix(episodes, spec, clinical_sets=clinical_sets)
    split = split_holdout(full, test_fraction=test_fraction, seed=seed, stratify=stratify)
    if not strict:
        return full.take(split.train_rows), full.take(split.test_rows), split
    train_episodes = [episodes[i] for i in split.train_rows]
    test_episodes = [episodes[i] for i in split.test_rows]
    transform = MatrixTransform.fit(train_episodes, filter_clinical_sets(spec, clinical_sets))
    train = build_matrix(train_episodes, spec, transform=transform)
    test = build_matrix(test_episodes, spec, transform=transform)
    check_columns(test.column_names, train.column_names)
    return train, test, split
