"""Side-by-side marker table: mean |SHAP| against Cox significance, per subgroup."""

import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from baselines.cox import CoxFit, fit_cox_groups
from cohort.matrix import FeatureMatrix
from explain.attribution import Attribution
from explain.importance import ImportanceRanking, feature_importance, subgroup_masks
from utils.artifacts import atomic_write_text, csv_stamp, markdown_stamp
from utils.logger import RiskLogger, warn

SIGNIFICANCE = 0.05
GROUP_LABELS = {"female": "women", "male": "men"}


def format_cox_p(p: Optional[float]) -> str:
    """Cox p-value text: <0.005* below 0.005, else three decimals, starred below 0.05."""
    if p is None or not np.isfinite(p):
        return "n/a"
    if p < 0.005:
        return "<0.005*"
    return f"{p:.3f}" + ("*" if p < SIGNIFICANCE else "")


@dataclass
class MarkerCell:
    """One (marker, group) cell of the comparison."""

    mean_abs_shap: Optional[float]
    cox_p: Optional[float]

    @property
    def significant(self) -> bool:
        return self.cox_p is not None and self.cox_p < SIGNIFICANCE

    @property
    def flag(self) -> str:
        if self.mean_abs_shap is None and self.cox_p is None:
            return "missing"
        if self.mean_abs_shap is None:
            return "cox-only"
        if self.cox_p is None:
            return "shap-only"
        return ""


@dataclass
class MarkerComparison:
    """Markers x groups grid of mean |SHAP| and Cox p-values for one diagnosis."""

    diagnosis: str
    groups: List[str]
    markers: List[str]
    cells: Dict[str, Dict[str, MarkerCell]] = field(default_factory=dict)
    cox_fits: Dict[str, Optional[CoxFit]] = field(default_factory=dict, repr=False)

    def cell(self, marker: str, group: str) -> MarkerCell:
        return self.cells[marker][group]

    def to_frame(self) -> pd.DataFrame:
        rows = []
        for marker in self.markers:
            for group in self.groups:
                cell = self.cell(marker, group)
                rows.append({
                    "marker": marker,
                    "diagnosis": self.diagnosis,
                    "group": group,
                    "mean_abs_shap": cell.mean_abs_shap,
                    "cox_p": cell.cox_p,
                    "significant": int(cell.significant),
                    "flag": cell.flag,
                })
        return pd.DataFrame(rows, columns=[
            "marker", "diagnosis", "group", "mean_abs_shap", "cox_p", "significant", "flag",
        ])

    def to_csv_text(self, config_hash: Optional[str] = None) -> str:
        buffer = io.StringIO()
        self.to_frame().to_csv(buffer, index=False, lineterminator="\n", float_format="%.10g")
        return csv_stamp(config_hash) + buffer.getvalue()

    def to_markdown(self) -> str:
        """Markers as rows; SHAP and p columns for each group."""
        labels = [GROUP_LABELS.get(group, group) for group in self.groups]
        header = ["Marker"] + [f"{label} {kind}" for label in labels for kind in ("SHAP", "p")]
        lines = [
            f"**{self.diagnosis}**",
            "",
            "| " + " | ".join(header) + " |",
            "|" + "|".join(["---"] * len(header)) + "|",
        ]
        for marker in self.markers:
            row = [marker]
            for group in self.groups:
                cell = self.cell(marker, group)
                row.append("n/a" if cell.mean_abs_shap is None else f"{cell.mean_abs_shap:.2f}")
                row.append(format_cox_p(cell.cox_p))
            lines.append("| " + " | ".join(row) + " |")
        lines.extend(["", "\\* p < 0.05 (Cox Wald test)"])
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return {
            "diagnosis": self.diagnosis,
            "groups": self.groups,
            "markers": self.markers,
            "rows": [
                {key: (None if isinstance(value, float) and np.isnan(value) else value) for key, value in row.items()}
                for row in self.to_frame().to_dict(orient="records")
            ],
            "cox_fits": {group: None if fit is None else fit.to_dict() for group, fit in self.cox_fits.items()},
        }

    def write(self, csv_path: Path, markdown_path: Path, config_hash: Optional[str] = None):
        atomic_write_text(csv_path, self.to_csv_text(config_hash))
        atomic_write_text(markdown_path, markdown_stamp(config_hash) + self.to_markdown())


def top_markers(ranking: ImportanceRanking, n: int = 10) -> List[str]:
    """The ``n`` highest-ranked columns, the default Cox covariate set."""
    return ranking.top(n)


def compare_markers(
    rankings: Dict[str, ImportanceRanking],
    cox_fits: Dict[str, Optional[CoxFit]],
    markers: Sequence[str],
    diagnosis: str = "cohort",
) -> MarkerComparison:
    """Pair every marker's mean |SHAP| with its Cox p-value in every group.

    A marker absent from one source keeps its row with that side empty and flagged.
    """
    groups = sorted(set(rankings) | set(cox_fits))
    comparison = MarkerComparison(diagnosis=diagnosis, groups=groups, markers=list(markers), cox_fits=dict(cox_fits))
    for marker in markers:
        comparison.cells[marker] = {}
        for group in groups:
            ranking = rankings.get(group)
            fit = cox_fits.get(group)
            shap = ranking.value_of(marker) if ranking is not None and marker in ranking.columns else None
            p = fit.p_value(marker) if fit is not None and marker in fit.names else None
            comparison.cells[marker][group] = MarkerCell(mean_abs_shap=shap, cox_p=p)
    one_sided = [m for m in markers for g in groups if comparison.cell(m, g).flag]
    if one_sided:
        warn("compare_markers", "markers missing from one source", markers=sorted(set(one_sided)))
    RiskLogger.log_operation("compare_markers", "success", {
        "diagnosis": diagnosis, "markers": len(markers), "groups": groups,
    })
    return comparison


def subgroup_comparison(
    attribution: Attribution,
    matrix: FeatureMatrix,
    markers: Optional[Sequence[str]] = None,
    n_markers: int = 10,
    diagnosis: str = "cohort",
    threads: int = 1,
) -> MarkerComparison:
    """Per-sex SHAP importance and Cox fits on the same rows, then ``compare_markers``.

    ``matrix`` holds the explained rows in attribution order. Cox covariates default to
    the top ``n_markers`` SHAP-ranked columns; rows without a survival time are left
    out of the Cox fits, and a covariate constant within a group is dropped there.
    """
    if markers is None or len(markers) == 0:
        markers = top_markers(feature_importance(attribution), n_markers)
    markers = list(markers)
    masks = {group: mask for group, mask in subgroup_masks(attribution, "sex").items() if mask.any()}

    rankings = {group: feature_importance(attribution.take(mask), group=group) for group, mask in masks.items()}
    present = [m for m in markers if m in matrix.column_names]
    cox_inputs = {}
    for group, mask in masks.items():
        rows = mask & np.isfinite(matrix.survival_time.astype(float))
        if rows.sum() < mask.sum():
            warn("compare_markers", "rows without survival time left out of the Cox fit",
                 group=group, excluded=int(mask.sum() - rows.sum()))
        X = matrix.rows[rows][:, [matrix.column_index(m) for m in present]]
        keep = [j for j in range(len(present)) if X.shape[0] and np.ptp(X[:, j]) > 0]
        dropped = [present[j] for j in range(len(present)) if j not in keep]
        if dropped:
            warn("compare_markers", "covariates constant within group dropped", group=group, covariates=dropped)
        cox_inputs[group] = (
            X[:, keep], matrix.survival_time[rows].astype(float), matrix.labels[rows], [present[j] for j in keep],
        )
    fits = fit_cox_groups(cox_inputs, threads)
    return compare_markers(rankings, fits, markers, diagnosis)
