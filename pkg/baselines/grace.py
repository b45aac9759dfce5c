"""GRACE point-score baseline: a validated point table, per-patient scoring and ROC evaluation."""

import json
import math
from pathlib import Path
from typing import Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field, ValidationError as PydanticValidationError, field_validator, model_validator

from cohort.episodes import RawEpisode
from eval.report import EvalReport, compare_reports, evaluate_scores
from utils.errors import GraceTableError, MarkerRangeError, MissingMarkerError, ValidationError
from utils.logger import RiskLogger, warn

NUMERIC_MARKERS = ("age", "heart_rate", "systolic_bp", "creatinine")
FLAG_MARKERS = ("cardiac_arrest", "st_deviation", "elevated_enzymes")
KILLIP_CLASSES = ("I", "II", "III", "IV")
MARKERS = NUMERIC_MARKERS + FLAG_MARKERS + ("killip",)

# Cohort source of every marker: a column-style reference into an episode
DEFAULT_MARKER_SOURCES = {
    "age": "age",
    "heart_rate": "heart_rate@max",
    "systolic_bp": "systolic_bp@min",
    "creatinine": "creatinine@max",
    "cardiac_arrest": "cardiac_arrest",
    "st_deviation": "st_deviation",
    "elevated_enzymes": "elevated_enzymes",
    "killip": "killip",
}


class GraceBand(BaseModel):
    """Half-open interval [lower, upper) and its points; ``upper=None`` is unbounded."""

    lower: float
    upper: Optional[float] = None
    points: int = Field(..., ge=0)

    def contains(self, value: float) -> bool:
        return value >= self.lower and (self.upper is None or value < self.upper)


class NumericMarker(BaseModel):
    unit: str
    direction: Literal["increasing", "decreasing"]
    bands: List[GraceBand]

    @field_validator("bands")
    @classmethod
    def _contiguous(cls, bands: List[GraceBand]) -> List[GraceBand]:
        if not bands:
            raise ValueError("a marker needs at least one band")
        for band, following in zip(bands[:-1], bands[1:]):
            if band.upper is None or band.upper != following.lower:
                raise ValueError(f"bands must be contiguous: {band.upper} then {following.lower}")
        for band in bands:
            if band.upper is not None and band.upper <= band.lower:
                raise ValueError(f"empty band [{band.lower}, {band.upper})")
        if bands[-1].upper is not None:
            raise ValueError("the last band must be unbounded")
        return bands

    @model_validator(mode="after")
    def _monotone(self) -> "NumericMarker":
        points = [band.points for band in self.bands]
        steps = np.diff(points)
        if self.direction == "increasing" and (steps < 0).any():
            raise ValueError("points must not decrease along an increasing marker")
        if self.direction == "decreasing" and (steps > 0).any():
            raise ValueError("points must not increase along a decreasing marker")
        return self

    def band_for(self, value: float) -> Optional[GraceBand]:
        return next((band for band in self.bands if band.contains(value)), None)


class RiskBands(BaseModel):
    low_max: int
    intermediate_max: int

    @model_validator(mode="after")
    def _ordered(self) -> "RiskBands":
        if self.intermediate_max <= self.low_max:
            raise ValueError("intermediate_max must exceed low_max")
        return self

    def category(self, total: int) -> str:
        if total <= self.low_max:
            return "low"
        if total <= self.intermediate_max:
            return "intermediate"
        return "high"


class GracePointTable(BaseModel):
    """Banded points of the eight GRACE markers."""

    version: str
    source: str
    numeric: Dict[str, NumericMarker]
    killip: Dict[str, int]
    flags: Dict[str, int]
    risk_bands: RiskBands

    @field_validator("numeric")
    @classmethod
    def _numeric_markers(cls, numeric: Dict[str, NumericMarker]) -> Dict[str, NumericMarker]:
        if set(numeric) != set(NUMERIC_MARKERS):
            raise ValueError(f"numeric markers must be exactly {', '.join(NUMERIC_MARKERS)}")
        return numeric

    @field_validator("killip")
    @classmethod
    def _killip(cls, killip: Dict[str, int]) -> Dict[str, int]:
        if set(killip) != set(KILLIP_CLASSES):
            raise ValueError("killip must list classes I, II, III and IV")
        points = [killip[level] for level in KILLIP_CLASSES]
        if any(p < 0 for p in points) or any(b < a for a, b in zip(points[:-1], points[1:])):
            raise ValueError("killip points must be non-negative and non-decreasing from I to IV")
        return killip

    @field_validator("flags")
    @classmethod
    def _flags(cls, flags: Dict[str, int]) -> Dict[str, int]:
        if set(flags) != set(FLAG_MARKERS):
            raise ValueError(f"flags must be exactly {', '.join(FLAG_MARKERS)}")
        if any(points < 0 for points in flags.values()):
            raise ValueError("flag points must be non-negative")
        return flags


class GraceInput(BaseModel):
    """One patient's eight GRACE markers."""

    age: float = Field(..., ge=0)
    heart_rate: float = Field(..., ge=0)
    systolic_bp: float = Field(..., ge=0)
    creatinine: float = Field(..., ge=0)
    cardiac_arrest: bool
    st_deviation: bool
    elevated_enzymes: bool
    killip: Literal["I", "II", "III", "IV"]

    @field_validator("age", "heart_rate", "systolic_bp", "creatinine")
    @classmethod
    def _finite(cls, value: float) -> float:
        if not math.isfinite(value):
            raise ValueError("must be finite")
        return value


class GraceBreakdownItem(BaseModel):
    marker: str
    value: str
    band: str
    points: int


class GraceScore(BaseModel):
    total: int
    risk_band: str
    breakdown: List[GraceBreakdownItem]


def grace_table_from_dict(data: dict) -> GracePointTable:
    try:
        return GracePointTable.model_validate(data)
    except PydanticValidationError as e:
        raise GraceTableError(f"Invalid GRACE point table: {e}", original_error=e)


def load_grace_table(path: Path) -> GracePointTable:
    """Read and validate a GRACE point table JSON file."""
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise GraceTableError(f"Cannot read GRACE table {path}: {e}", original_error=e)
    table = grace_table_from_dict(data)
    RiskLogger.log_operation("load_grace_table", "success", {"path": str(path), "version": table.version})
    return table


def grace_input(values: dict) -> GraceInput:
    """Validate a marker mapping; missing markers are named, GRACE has no imputation."""
    for marker in MARKERS:
        if values.get(marker) is None:
            raise MissingMarkerError(marker)
    try:
        return GraceInput.model_validate({marker: values[marker] for marker in MARKERS})
    except PydanticValidationError as e:
        error = e.errors()[0]
        field = str(error["loc"][0]) if error.get("loc") else None
        raise ValidationError(f"Invalid GRACE input: {error['msg']}", field=field)


def _band_text(band: GraceBand) -> str:
    if band.upper is None:
        return f">={band.lower:g}"
    return f"[{band.lower:g}, {band.upper:g})"


def grace_score(patient: GraceInput, table: GracePointTable) -> GraceScore:
    """Total points, risk band and per-marker breakdown of one patient.

    Raises:
        MarkerRangeError: A numeric marker falls outside every band
    """
    breakdown = []
    for marker in NUMERIC_MARKERS:
        value = getattr(patient, marker)
        band = table.numeric[marker].band_for(value)
        if band is None:
            raise MarkerRangeError(marker, value)
        breakdown.append(GraceBreakdownItem(marker=marker, value=f"{value:g}", band=_band_text(band), points=band.points))
    for marker in FLAG_MARKERS:
        present = getattr(patient, marker)
        breakdown.append(GraceBreakdownItem(
            marker=marker, value="yes" if present else "no",
            band="present" if present else "absent", points=table.flags[marker] if present else 0,
        ))
    breakdown.append(GraceBreakdownItem(
        marker="killip", value=patient.killip, band=f"class {patient.killip}", points=table.killip[patient.killip],
    ))
    total = sum(item.points for item in breakdown)
    return GraceScore(total=total, risk_band=table.risk_bands.category(total), breakdown=breakdown)


def _episode_value(episode: RawEpisode, source: str):
    name, _, stat = source.partition("@")
    if stat:
        return episode.aggregate(name, stat)
    if name in ("age", "los_days", "sex"):
        return episode.core_value(name)
    return episode.static_values.get(name)


def grace_inputs_from_episodes(
    episodes: Sequence[RawEpisode],
    sources: Optional[Dict[str, str]] = None,
) -> Tuple[List[GraceInput], List[int]]:
    """Marker inputs of every episode that has all eight markers.

    Episodes missing a marker are excluded with a warning.

    Returns:
        Inputs and the indices of the episodes they came from
    """
    sources = {**DEFAULT_MARKER_SOURCES, **(sources or {})}
    inputs, kept, excluded = [], [], []
    for i, episode in enumerate(episodes):
        try:
            inputs.append(grace_input({marker: _episode_value(episode, sources[marker]) for marker in MARKERS}))
            kept.append(i)
        except MissingMarkerError as e:
            excluded.append((episode.episode_id, e.marker))
    if excluded:
        warn("grace_inputs", "episodes without every GRACE marker excluded",
             excluded=len(excluded), first=excluded[0][0], marker=excluded[0][1])
    return inputs, kept


def grace_eval(
    inputs: Sequence[GraceInput],
    labels: Sequence[int],
    table: GracePointTable,
    model_scores: Optional[Dict[str, Sequence[float]]] = None,
    n_boot: int = 1000,
    seed: int = 0,
) -> EvalReport:
    """Evaluate the GRACE total as a risk score, compared against any model scores on the same rows."""
    if len(inputs) != len(labels):
        raise ValidationError("inputs and labels differ in length", field="labels")
    totals = np.array([grace_score(patient, table).total for patient in inputs], dtype=float)
    report = evaluate_scores(totals, labels, name="GRACE", n_boot=n_boot, seed=seed)
    for name, scores in (model_scores or {}).items():
        other = evaluate_scores(scores, labels, name=name, n_boot=n_boot, seed=seed)
        compare_reports(report, other)
    return report
