"""Cohort statistics split by sex (Table-1 style)."""

from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
from scipy import stats

from cohort.episodes import RawEpisode
from cohort.spec import FeatureSpec
from utils.errors import ValidationError
from utils.logger import RiskLogger

NOT_APPLICABLE = "n/a"
GROUPS = ("female", "male", "all")
MISSING_LEVEL = "(missing)"

PValue = Union[float, str]


@dataclass
class ContinuousRow:
    """mean ± sd per sex with a Welch t-test between sexes."""

    feature: str
    mean: Dict[str, Optional[float]]
    sd: Dict[str, Optional[float]]
    n: Dict[str, int]
    statistic: Optional[float]
    p_value: PValue


@dataclass
class CategoricalRow:
    """Counts and percentages per level and sex with a chi-square test."""

    feature: str
    levels: List[str]
    counts: Dict[str, List[int]]
    percentages: Dict[str, List[float]]
    statistic: Optional[float]
    p_value: PValue


@dataclass
class CohortSummary:
    """Per-feature statistics of a cohort split by sex."""

    n: Dict[str, int]
    deaths: Dict[str, int]
    early_deaths: Optional[Dict[str, int]] = None
    continuous: List[ContinuousRow] = field(default_factory=list)
    categorical: List[CategoricalRow] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_markdown(self) -> str:
        """Render as a Markdown table with women, men and all columns."""
        lines = [
            f"| Feature | Women (n={self.n['female']}) | Men (n={self.n['male']}) | All (n={self.n['all']}) | p |",
            "|---|---|---|---|---|",
        ]
        for row in self.continuous:
            cells = [
                "-" if row.mean[g] is None else f"{row.mean[g]:.2f} ± {row.sd[g] or 0.0:.2f}"
                for g in GROUPS
            ]
            lines.append(f"| {row.feature} | {' | '.join(cells)} | {format_p(row.p_value)} |")
        for row in self.categorical:
            lines.append(f"| {row.feature} | | | | {format_p(row.p_value)} |")
            for k, level in enumerate(row.levels):
                cells = [f"{row.counts[g][k]} ({row.percentages[g][k]:.2f}%)" for g in GROUPS]
                lines.append(f"| &nbsp;&nbsp;{level} | {' | '.join(cells)} | |")
        if self.early_deaths is not None:
            cells = [str(self.early_deaths[g]) for g in GROUPS]
            lines.append(f"| Died within 24 h | {' | '.join(cells)} | |")
        return "\n".join(lines) + "\n"


def format_p(p_value: PValue) -> str:
    """Render a p-value for tables."""
    if isinstance(p_value, str):
        return p_value
    if p_value < 0.001:
        return "<0.001"
    return f"{p_value:.3f}"


def welch_test(a: np.ndarray, b: np.ndarray):
    """Two-sided Welch t-test; not applicable when either side is too small or both are constant."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    if a.size < 2 or b.size < 2:
        return None, NOT_APPLICABLE
    if np.var(a) == 0 and np.var(b) == 0:
        return None, NOT_APPLICABLE
    result = stats.ttest_ind(a, b, equal_var=False)
    return float(result.statistic), float(result.pvalue)


def chi_square_test(table: np.ndarray):
    """Pearson chi-square (no continuity correction) on a 2 x k table of counts."""
    table = np.asarray(table, dtype=float)
    table = table[:, table.sum(axis=0) > 0]
    if table.shape[1] < 2 or (table.sum(axis=1) == 0).any():
        return None, NOT_APPLICABLE
    statistic, p_value, _, _ = stats.chi2_contingency(table, correction=False)
    return float(statistic), float(p_value)


def _continuous_row(name: str, values: Sequence[Optional[float]], sexes: np.ndarray) -> ContinuousRow:
    values = np.array([np.nan if v is None else v for v in values], dtype=float)
    observed = ~np.isnan(values)
    groups = {
        "female": values[observed & (sexes == "female")],
        "male": values[observed & (sexes == "male")],
        "all": values[observed],
    }
    statistic, p_value = welch_test(groups["female"], groups["male"])
    return ContinuousRow(
        feature=name,
        mean={g: (float(v.mean()) if v.size else None) for g, v in groups.items()},
        sd={g: (float(v.std(ddof=1)) if v.size > 1 else None) for g, v in groups.items()},
        n={g: int(v.size) for g, v in groups.items()},
        statistic=statistic,
        p_value=p_value,
    )


def _categorical_row(name: str, values: Sequence, sexes: np.ndarray, levels=None) -> CategoricalRow:
    values = np.array(["" if v is None else str(v) for v in values], dtype=object)
    levels = list(levels) if levels else sorted({v for v in values if v != ""})
    has_missing = bool((values == "").any())
    all_levels = levels + ([MISSING_LEVEL] if has_missing else [])
    counts, percentages = {}, {}
    for group in GROUPS:
        mask = np.ones(values.size, dtype=bool) if group == "all" else sexes == group
        group_counts = [int(((values == level) & mask).sum()) for level in levels]
        if has_missing:
            group_counts.append(int(((values == "") & mask).sum()))
        total = sum(group_counts)
        counts[group] = group_counts
        percentages[group] = [100.0 * c / total if total else 0.0 for c in group_counts]
    table = np.array([counts["female"][:len(levels)], counts["male"][:len(levels)]])
    statistic, p_value = chi_square_test(table)
    return CategoricalRow(
        feature=name, levels=all_levels, counts=counts, percentages=percentages,
        statistic=statistic, p_value=p_value,
    )


def summarize_cohort(episodes: Sequence[RawEpisode], spec: Optional[Sequence[FeatureSpec]] = None) -> CohortSummary:
    """Compare women and men feature by feature.

    Continuous features get a Welch t-test, categorical features a Pearson chi-square
    on the sex x level table. Dynamic features are summarized by their per-episode mean.

    Raises:
        ValidationError: One of the sexes is absent
    """
    sexes = np.array([episode.sex for episode in episodes], dtype=object)
    n_female, n_male = int((sexes == "female").sum()), int((sexes == "male").sum())
    if n_female == 0 or n_male == 0:
        raise ValidationError("summarize_cohort needs both sexes present", field="sex")
    labels = np.array([episode.label for episode in episodes], dtype=np.int64)

    summary = CohortSummary(
        n={"female": n_female, "male": n_male, "all": len(episodes)},
        deaths={
            "female": int(labels[sexes == "female"].sum()),
            "male": int(labels[sexes == "male"].sum()),
            "all": int(labels.sum()),
        },
    )
    summary.continuous.append(_continuous_row("age", [e.age for e in episodes], sexes))
    summary.continuous.append(_continuous_row("los_days", [e.length_of_stay for e in episodes], sexes))
    summary.categorical.append(_categorical_row(
        "mortality", ["died" if e.label else "survived" for e in episodes], sexes, levels=["survived", "died"]
    ))

    for feature in spec or ():
        if feature.is_core:
            continue
        if feature.kind == "static-numeric":
            summary.continuous.append(
                _continuous_row(feature.name, [e.static_values.get(feature.name) for e in episodes], sexes)
            )
        elif feature.kind == "dynamic-numeric":
            summary.continuous.append(
                _continuous_row(f"{feature.name}@mean", [e.aggregate(feature.name, "mean") for e in episodes], sexes)
            )
        elif feature.kind == "binary-flag":
            summary.categorical.append(_categorical_row(
                feature.name, [e.static_values.get(feature.name) for e in episodes], sexes, levels=["0", "1"]
            ))
        else:
            summary.categorical.append(_categorical_row(
                feature.name, [e.static_values.get(feature.name) for e in episodes], sexes, levels=feature.levels
            ))

    if any(e.survival_time is not None for e in episodes):
        early = np.array([e.label == 1 and e.survival_time is not None and e.survival_time <= 1 for e in episodes])
        summary.early_deaths = {
            "female": int((early & (sexes == "female")).sum()),
            "male": int((early & (sexes == "male")).sum()),
            "all": int(early.sum()),
        }

    RiskLogger.log_operation("summarize_cohort", "success", {
        "episodes": len(episodes),
        "continuous_rows": len(summary.continuous),
        "categorical_rows": len(summary.categorical),
    })
    return summary
