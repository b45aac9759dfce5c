"""Mean-|phi| feature importance, overall and within patient subgroups."""

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from explain.attribution import Attribution
from utils.errors import ValidationError
from utils.logger import warn

GROUPINGS = ("sex", "age-bins", "sex-age", "custom")
DEFAULT_AGE_EDGES = (50, 60, 70, 80)


@dataclass
class ImportanceRanking:
    """Per-column importance and the descending order over columns."""

    columns: List[str]
    importance: np.ndarray
    order: np.ndarray
    aggregate: str = "mean"
    n_rows: int = 0
    group: Optional[str] = None

    def ranked(self) -> List[Tuple[str, float]]:
        return [(self.columns[j], float(self.importance[j])) for j in self.order]

    def top(self, k: Optional[int] = None) -> List[str]:
        order = self.order if k is None else self.order[:k]
        return [self.columns[j] for j in order]

    def rank_of(self, column: str) -> int:
        """1-based rank of a column."""
        if column not in self.columns:
            raise ValidationError(f"Unknown column '{column}'", field=column)
        j = self.columns.index(column)
        return int(np.flatnonzero(self.order == j)[0]) + 1

    def value_of(self, column: str) -> float:
        if column not in self.columns:
            raise ValidationError(f"Unknown column '{column}'", field=column)
        return float(self.importance[self.columns.index(column)])

    def to_dict(self) -> dict:
        return {
            "group": self.group,
            "n_rows": self.n_rows,
            "aggregate": self.aggregate,
            "ranking": [{"column": name, "importance": value} for name, value in self.ranked()],
        }


def feature_importance(attribution: Attribution, aggregate: str = "mean", group: Optional[str] = None) -> ImportanceRanking:
    """I_j = mean over rows of |phi_ij|, sorted descending with ties kept in column order.

    ``aggregate="sum"`` gives the un-normalized total; the ordering is the same.
    """
    if aggregate not in ("mean", "sum"):
        raise ValidationError(f"aggregate must be 'mean' or 'sum', got {aggregate!r}", field="aggregate")
    if attribution.n_rows == 0:
        raise ValidationError("Cannot rank features of an empty attribution", field="attribution")
    totals = np.abs(attribution.values).sum(axis=0)
    importance = totals / attribution.n_rows if aggregate == "mean" else totals
    order = np.lexsort((np.arange(importance.size), -importance))
    return ImportanceRanking(
        columns=list(attribution.columns),
        importance=importance,
        order=order,
        aggregate=aggregate,
        n_rows=attribution.n_rows,
        group=group,
    )


def age_bin_labels(edges: Sequence[float]) -> List[str]:
    """Labels like <50, 50-59, ..., >=80 for edges (50, 60, 70, 80)."""
    edges = [int(edge) if float(edge).is_integer() else edge for edge in edges]
    labels = [f"<{edges[0]}"]
    for lower, upper in zip(edges[:-1], edges[1:]):
        top = upper - 1 if isinstance(upper, int) and isinstance(lower, int) else upper
        labels.append(f"{lower}-{top}")
    labels.append(f">={edges[-1]}")
    return labels


def age_bins(age: np.ndarray, edges: Sequence[float]) -> np.ndarray:
    """Age-bin label of every row; a row at an edge falls in the upper bin."""
    edges = list(edges)
    if not edges or any(b <= a for a, b in zip(edges[:-1], edges[1:])):
        raise ValidationError("age_edges must be a non-empty increasing list", field="age_edges")
    labels = np.array(age_bin_labels(edges), dtype=object)
    return labels[np.searchsorted(np.asarray(edges, dtype=float), np.asarray(age, dtype=float), side="right")]


def subgroup_masks(
    attribution: Attribution,
    grouping: str = "sex",
    age_edges: Sequence[float] = DEFAULT_AGE_EDGES,
    predicate: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None,
) -> Dict[str, np.ndarray]:
    """Row masks of every group, in a stable order (empty groups included).

    ``custom`` groups by ``predicate(sex, age)``, a boolean mask splitting rows into
    "match" and "rest".
    """
    if grouping not in GROUPINGS:
        raise ValidationError(f"grouping must be one of {', '.join(GROUPINGS)}, got {grouping!r}", field="grouping")
    if attribution.sex is None or attribution.age is None:
        raise ValidationError("Attribution carries no sex/age tags", field="attribution")
    sex = np.asarray(attribution.sex, dtype=object)
    age = np.asarray(attribution.age, dtype=float)

    if grouping == "custom":
        if predicate is None:
            raise ValidationError("custom grouping needs a predicate", field="predicate")
        match = np.asarray(predicate(sex, age), dtype=bool)
        return {"match": match, "rest": ~match}

    sexes = sorted({str(value) for value in sex} | {"female", "male"})
    if grouping == "sex":
        return {value: sex == value for value in sexes}
    bins = age_bins(age, age_edges)
    labels = age_bin_labels(age_edges)
    if grouping == "age-bins":
        return {label: bins == label for label in labels}
    return {f"{value}/{label}": (sex == value) & (bins == label) for value in sexes for label in labels}


@dataclass
class SubgroupImportance:
    """Rankings per non-empty group plus the groups left out."""

    grouping: str
    rankings: Dict[str, ImportanceRanking] = field(default_factory=dict)
    sizes: Dict[str, int] = field(default_factory=dict)
    omitted: List[str] = field(default_factory=list)

    def to_dict(self, top_k: Optional[int] = None) -> dict:
        groups = []
        for name, ranking in self.rankings.items():
            entry = ranking.to_dict()
            if top_k is not None:
                entry["ranking"] = entry["ranking"][:top_k]
            groups.append(entry)
        return {"grouping": self.grouping, "sizes": self.sizes, "omitted": self.omitted, "groups": groups}


def subgroup_importance(
    attribution: Attribution,
    grouping: str = "sex",
    age_edges: Sequence[float] = DEFAULT_AGE_EDGES,
    predicate: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None,
) -> SubgroupImportance:
    """Importance ranking within every group's rows; empty groups are omitted with a warning."""
    result = SubgroupImportance(grouping=grouping)
    for name, mask in subgroup_masks(attribution, grouping, age_edges, predicate).items():
        size = int(mask.sum())
        result.sizes[name] = size
        if size == 0:
            result.omitted.append(name)
            warn("subgroup_importance", "empty subgroup omitted", group=name, grouping=grouping)
            continue
        result.rankings[name] = feature_importance(attribution.take(mask), group=name)
    return result
