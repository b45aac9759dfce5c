"""Synthetic cohorts with a planted logistic risk function."""

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
import yaml
from scipy.optimize import brentq
from scipy.special import expit, logit

from cohort.episodes import RawEpisode
from cohort.matrix import column_layout, raw_columns
from cohort.spec import FeatureSpec, feature_spec_from_dict, validate_feature_spec
from utils.artifacts import atomic_write_json
from utils.errors import ValidationError
from utils.logger import RiskLogger
from utils.seeding import SYNTH, make_rng
from utils.validators import validate_fraction

DIRECTIONS = {"increasing": 1.0, "decreasing": -1.0}
TRANSFORMS = ("linear", "threshold")


@dataclass
class FeatureMarginal:
    """How one feature is drawn."""

    feature: FeatureSpec
    mean: Optional[float] = None
    sd: Optional[float] = None
    prevalence: Optional[float] = None
    probabilities: Optional[List[float]] = None
    missing_rate: float = 0.0
    n_measurements: int = 3
    within_sd: Optional[float] = None
    min: Optional[float] = None
    max: Optional[float] = None
    decimals: int = 3

    def validate(self):
        name, kind = self.feature.name, self.feature.kind
        if self.feature.is_core:
            return
        if kind in ("static-numeric", "dynamic-numeric"):
            if self.mean is None or self.sd is None or self.sd < 0:
                raise ValidationError(f"Numeric feature '{name}' needs mean and a non-negative sd", field=name)
        elif kind == "binary-flag":
            if self.prevalence is None or not 0 <= self.prevalence <= 1:
                raise ValidationError(f"Flag '{name}' needs a prevalence in [0, 1]", field=name)
        else:
            if not self.feature.levels:
                raise ValidationError(f"Categorical '{name}' must declare its levels", field=name)
            if self.probabilities is not None:
                if len(self.probabilities) != len(self.feature.levels) or abs(sum(self.probabilities) - 1) > 1e-9:
                    raise ValidationError(f"Probabilities of '{name}' must match its levels and sum to 1", field=name)
        if not 0 <= self.missing_rate < 1:
            raise ValidationError(f"missing_rate of '{name}' must lie in [0, 1)", field=name)
        if kind == "dynamic-numeric" and self.n_measurements < 1:
            raise ValidationError(f"n_measurements of '{name}' must be >= 1", field=name)


@dataclass
class RiskTerm:
    """One planted term of the logistic outcome model.

    ``feature`` names a matrix column (``urea@mean``, ``killip=III``, ``age``). Linear
    terms act on the column's z-score; threshold terms on the indicator ``x > threshold``
    in raw units. A subgroup restricts the term to matching episodes.
    """

    feature: str
    weight: float
    direction: str = "increasing"
    transform: str = "linear"
    threshold: Optional[float] = None
    subgroup: Dict[str, object] = field(default_factory=dict)

    @property
    def sign(self) -> float:
        return DIRECTIONS[self.direction]

    def validate(self):
        if self.direction not in DIRECTIONS:
            raise ValidationError(f"Term '{self.feature}' has unknown direction {self.direction!r}", field=self.feature)
        if self.transform not in TRANSFORMS:
            raise ValidationError(f"Term '{self.feature}' has unknown transform {self.transform!r}", field=self.feature)
        if self.transform == "threshold" and self.threshold is None:
            raise ValidationError(f"Threshold term '{self.feature}' needs a threshold", field=self.feature)
        unknown = set(self.subgroup) - {"sex", "age_min", "age_max"}
        if unknown:
            raise ValidationError(f"Term '{self.feature}' has unknown subgroup keys {sorted(unknown)}", field=self.feature)

    def applies(self, sex: np.ndarray, age: np.ndarray) -> np.ndarray:
        mask = np.ones(sex.size, dtype=bool)
        if "sex" in self.subgroup:
            mask &= sex == self.subgroup["sex"]
        if "age_min" in self.subgroup:
            mask &= age >= float(self.subgroup["age_min"])
        if "age_max" in self.subgroup:
            mask &= age < float(self.subgroup["age_max"])
        return mask


@dataclass
class GeneratorConfig:
    """Marginals, base rate and planted risk terms of a synthetic cohort."""

    n: int
    base_rate: float
    features: List[FeatureMarginal]
    risk_terms: List[RiskTerm] = field(default_factory=list)
    female_fraction: float = 0.5
    age: Dict[str, float] = field(default_factory=lambda: {"mean": 65.0, "sd": 12.0, "min": 18.0, "max": 100.0})
    los: Dict[str, float] = field(default_factory=lambda: {"mean": 8.0, "sd": 6.0})
    survival: Optional[Dict[str, float]] = None
    id_prefix: str = "E"

    def feature_spec(self) -> List[FeatureSpec]:
        return [marginal.feature for marginal in self.features]

    def validate(self) -> "GeneratorConfig":
        if self.n < 1:
            raise ValidationError("Generator n must be >= 1", field="n")
        validate_fraction(self.base_rate, "base_rate")
        if not 0 < self.female_fraction < 1:
            raise ValidationError("female_fraction must lie in (0, 1)", field="female_fraction")
        validate_feature_spec(self.feature_spec())
        for marginal in self.features:
            marginal.validate()
        columns = {column.name for column in column_layout(self.feature_spec(), _declared_levels(self.feature_spec()))}
        for term in self.risk_terms:
            term.validate()
            if term.feature not in columns:
                raise ValidationError(
                    f"Planted weight on undeclared feature column '{term.feature}'", field=term.feature
                )
        if self.survival is not None and float(self.survival.get("baseline_hazard", 0)) <= 0:
            raise ValidationError("survival.baseline_hazard must be positive", field="survival")
        return self


def _declared_levels(spec: List[FeatureSpec]) -> dict:
    return {feature.name: list(feature.levels) for feature in spec if feature.kind == "static-categorical"}


def generator_config_from_dict(data: dict) -> GeneratorConfig:
    """Parse a generator config document."""
    try:
        marginals = []
        for entry in data["features"]:
            entry = dict(entry)
            spec = feature_spec_from_dict({
                key: entry.pop(key) for key in ("name", "kind", "clinical_set", "unit", "levels") if key in entry
            })
            marginals.append(FeatureMarginal(feature=spec, **entry))
        terms = [RiskTerm(**term) for term in data.get("risk_terms", [])]
        rest = {key: value for key, value in data.items() if key not in ("features", "risk_terms")}
        config = GeneratorConfig(features=marginals, risk_terms=terms, **rest)
    except (KeyError, TypeError) as e:
        raise ValidationError(f"Malformed generator config: {e}", field="generator")
    return config.validate()


def load_generator_config(path: Path) -> GeneratorConfig:
    """Read a generator config from JSON or YAML."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
        data = yaml.safe_load(text) if path.suffix.lower() in {".yaml", ".yml"} else json.loads(text)
    except (OSError, json.JSONDecodeError, yaml.YAMLError) as e:
        raise ValidationError(f"Cannot read generator config {path}: {e}", field="generator")
    return generator_config_from_dict(data)


@dataclass
class SyntheticCohort:
    """Generated episodes plus the planted ground truth."""

    episodes: List[RawEpisode]
    truth: dict


def _clip(values: np.ndarray, marginal: FeatureMarginal) -> np.ndarray:
    low = -np.inf if marginal.min is None else marginal.min
    high = np.inf if marginal.max is None else marginal.max
    return np.round(np.clip(values, low, high), marginal.decimals)


def synth_cohort(template: GeneratorConfig, seed: int) -> SyntheticCohort:
    """Draw a cohort from the template.

    Features are drawn independently from their marginals; the outcome is Bernoulli
    from ``expit(intercept + sum of planted terms)`` with the intercept solved so the
    mean probability equals ``base_rate``. When survival is configured, deaths get an
    exponential event time truncated to the stay (rate scaled by the planted terms)
    and survivors are censored at discharge.

    Args:
        template: Validated generator config
        seed: Explicit integer seed

    Returns:
        SyntheticCohort with episodes and the planted truth
    """
    template.validate()
    rng = make_rng(seed, SYNTH)
    n = template.n

    sexes = np.where(rng.random(n) < template.female_fraction, "female", "male").astype(object)
    age_cfg = template.age
    ages = np.round(np.clip(rng.normal(age_cfg["mean"], age_cfg["sd"], n),
                            age_cfg.get("min", 18.0), age_cfg.get("max", 100.0)), 1)
    los_mean, los_sd = float(template.los["mean"]), float(template.los["sd"])
    shape, scale = (los_mean / los_sd) ** 2, los_sd ** 2 / los_mean
    los = np.maximum(np.round(rng.gamma(shape, scale, n), 2), 0.01)

    episodes = [
        RawEpisode(
            episode_id=f"{template.id_prefix}{i + 1:06d}",
            sex=str(sexes[i]),
            age=float(ages[i]),
            length_of_stay=float(los[i]),
            label=0,
        )
        for i in range(n)
    ]

    for marginal in template.features:
        feature = marginal.feature
        if feature.is_core:
            continue
        missing = rng.random(n) < marginal.missing_rate
        if feature.kind == "static-numeric":
            values = _clip(rng.normal(marginal.mean, marginal.sd, n), marginal)
            for i in np.flatnonzero(~missing):
                episodes[i].static_values[feature.name] = float(values[i])
        elif feature.kind == "binary-flag":
            values = rng.random(n) < marginal.prevalence
            for i in np.flatnonzero(~missing):
                episodes[i].static_values[feature.name] = int(values[i])
        elif feature.kind == "static-categorical":
            codes = rng.choice(len(feature.levels), size=n, p=marginal.probabilities)
            for i in np.flatnonzero(~missing):
                episodes[i].static_values[feature.name] = feature.levels[codes[i]]
        else:
            m = marginal.n_measurements
            within = marginal.sd * 0.25 if marginal.within_sd is None else marginal.within_sd
            level = rng.normal(marginal.mean, marginal.sd, n)
            values = _clip(level[:, None] + rng.normal(0.0, within, (n, m)), marginal)
            hours = np.round(np.sort(rng.random((n, m)), axis=1) * (los[:, None] * 24.0), 2)
            for i in np.flatnonzero(~missing):
                episodes[i].dynamic_values[feature.name] = [
                    (float(hours[i, k]), float(values[i, k])) for k in range(m)
                ]

    spec = template.feature_spec()
    columns = column_layout(spec, _declared_levels(spec))
    names = [column.name for column in columns]
    raw = raw_columns(episodes, spec, columns)
    ages_f = ages.astype(float)

    eta = np.zeros(n)
    term_truth = []
    for term in template.risk_terms:
        x = raw[:, names.index(term.feature)]
        observed = ~np.isnan(x)
        column_mean = float(x[observed].mean()) if observed.any() else 0.0
        column_sd = float(x[observed].std()) if observed.any() else 0.0
        if term.transform == "linear":
            if column_sd == 0:
                raise ValidationError(f"Planted linear term on constant column '{term.feature}'", field=term.feature)
            signal = np.where(observed, (x - column_mean) / column_sd, 0.0)
        else:
            signal = np.where(observed, (x > term.threshold).astype(float), 0.0)
        eta += term.sign * term.weight * signal * term.applies(sexes, ages_f)
        term_truth.append({**asdict(term), "column_mean": column_mean, "column_sd": column_sd})

    if np.all(eta == 0):
        intercept = float(logit(template.base_rate))
    else:
        intercept = float(brentq(lambda b: expit(b + eta).mean() - template.base_rate, -60.0, 60.0, xtol=1e-12))
    probabilities = expit(intercept + eta)
    labels = (rng.random(n) < probabilities).astype(np.int64)

    if template.survival is not None:
        hazard = float(template.survival["baseline_hazard"]) * np.exp(eta)
        horizon = template.survival.get("horizon_days")
        window = los if horizon is None else np.minimum(los, float(horizon))
        u = 1.0 - rng.random(n)
        event_time = -np.log1p(-u * (1.0 - np.exp(-hazard * window))) / hazard
        event_time = np.maximum(np.round(event_time, 3), 0.001)
        for i, episode in enumerate(episodes):
            episode.survival_time = float(event_time[i] if labels[i] else window[i])

    for i, episode in enumerate(episodes):
        episode.label = int(labels[i])

    truth = {
        "seed": seed,
        "n": n,
        "base_rate": template.base_rate,
        "empirical_rate": float(labels.mean()),
        "intercept": intercept,
        "terms": term_truth,
    }
    RiskLogger.log_operation("synth_cohort", "success", {
        "episodes": n, "positives": int(labels.sum()), "terms": len(term_truth), "seed": seed,
    })
    return SyntheticCohort(episodes=episodes, truth=truth)


def truth_path_for(cohort_path: Path) -> Path:
    """``<dir>/<stem>.truth.json`` next to a cohort CSV."""
    cohort_path = Path(cohort_path)
    return cohort_path.with_name(f"{cohort_path.stem}.truth.json")


def write_truth(path: Path, truth: dict, config_hash: Optional[str] = None) -> Path:
    """Write the planted ground-truth sidecar."""
    return atomic_write_json(path, truth, config_hash)
