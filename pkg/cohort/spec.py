"""Feature specification: which clinical features a cohort carries and how they expand."""

import json
from dataclasses import dataclass
from pathlib import Path
from typing import List, Sequence, Tuple

from utils.errors import ValidationError

KINDS = ("static-categorical", "static-numeric", "dynamic-numeric", "binary-flag")
CLINICAL_SETS = (
    "demographic",
    "complications",
    "treatments",
    "procedures",
    "blood-gas",
    "laboratory",
    "hemodynamic",
    "vital-signs",
)
DYNAMIC_STATS = ("min", "max", "mean")

# Features read from the episode's core columns instead of a feature column
CORE_FEATURES = {"age": "static-numeric", "los_days": "static-numeric", "sex": "static-categorical"}
SEX_LEVELS = ("female", "male")


@dataclass(frozen=True)
class FeatureSpec:
    """One clinical feature of the cohort contract."""

    name: str
    kind: str
    clinical_set: str
    unit: str = ""
    levels: Tuple[str, ...] = ()

    @property
    def is_core(self) -> bool:
        return self.name in CORE_FEATURES

    def csv_columns(self) -> List[str]:
        """Columns this feature occupies in the wide episode CSV."""
        if self.is_core:
            return []
        if self.kind == "dynamic-numeric":
            return [f"{self.name}@{stat}" for stat in DYNAMIC_STATS]
        return [self.name]

    def to_dict(self) -> dict:
        data = {"name": self.name, "kind": self.kind, "clinical_set": self.clinical_set, "unit": self.unit}
        if self.levels:
            data["levels"] = list(self.levels)
        return data


def feature_spec_from_dict(data: dict) -> FeatureSpec:
    """Build one FeatureSpec from its JSON object."""
    if not isinstance(data, dict):
        raise ValidationError(f"Feature entry must be an object, got {data!r}", field="features")
    for key in ("name", "kind", "clinical_set"):
        if not data.get(key):
            raise ValidationError(f"Feature entry is missing '{key}': {data!r}", field=key)
    name = str(data["name"])
    kind = data["kind"]
    if kind not in KINDS:
        raise ValidationError(f"Feature '{name}' has unknown kind {kind!r}", field=name)
    if data["clinical_set"] not in CLINICAL_SETS:
        raise ValidationError(f"Feature '{name}' has unknown clinical set {data['clinical_set']!r}", field=name)
    if "@" in name or "=" in name:
        raise ValidationError(f"Feature name '{name}' may not contain '@' or '='", field=name)
    levels = tuple(str(level) for level in data.get("levels") or ())
    if name == "sex":
        levels = levels or SEX_LEVELS
    if name in CORE_FEATURES and kind != CORE_FEATURES[name]:
        raise ValidationError(f"Core feature '{name}' must be {CORE_FEATURES[name]}", field=name)
    if levels and kind != "static-categorical":
        raise ValidationError(f"Feature '{name}' declares levels but is {kind}", field=name)
    if len(set(levels)) != len(levels):
        raise ValidationError(f"Feature '{name}' declares duplicate levels", field=name)
    return FeatureSpec(name=name, kind=kind, clinical_set=data["clinical_set"], unit=str(data.get("unit", "")), levels=levels)


def validate_feature_spec(specs: Sequence[FeatureSpec]) -> List[FeatureSpec]:
    """Check names are unique and the spec is non-empty."""
    specs = list(specs)
    if not specs:
        raise ValidationError("Feature spec declares no features", field="features")
    seen = set()
    for spec in specs:
        if spec.name in seen:
            raise ValidationError(f"Duplicate feature name '{spec.name}'", field=spec.name)
        seen.add(spec.name)
    return specs


def load_feature_spec(path: Path) -> List[FeatureSpec]:
    """Read a feature spec JSON document (``{"features": [...]}`` or a bare list)."""
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise ValidationError(f"Cannot read feature spec {path}: {e}", field="feature_spec")
    entries = data.get("features") if isinstance(data, dict) else data
    if not isinstance(entries, list):
        raise ValidationError("Feature spec must hold a 'features' list", field="feature_spec")
    return validate_feature_spec(feature_spec_from_dict(entry) for entry in entries)


def filter_clinical_sets(specs: Sequence[FeatureSpec], clinical_sets=None) -> List[FeatureSpec]:
    """Restrict a spec to the named clinical sets (None keeps the combined set)."""
    if not clinical_sets:
        return list(specs)
    unknown = sorted(set(clinical_sets) - set(CLINICAL_SETS))
    if unknown:
        raise ValidationError(f"Unknown clinical set(s): {', '.join(unknown)}", field="clinical_sets")
    kept = [spec for spec in specs if spec.clinical_set in set(clinical_sets)]
    if not kept:
        raise ValidationError(
            f"No features belong to clinical set(s) {', '.join(clinical_sets)}", field="clinical_sets"
        )
    return kept
