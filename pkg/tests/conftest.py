import os
import sys

import numpy as np
import pytest

PROJECT_ROOT = os.path.abspath(os.path.join(os.path.dirname(__file__), ".."))
if PROJECT_ROOT not in sys.path:
    sys.path.insert(0, PROJECT_ROOT)

from cohort.matrix import build_matrix  # noqa: E402
from cohort.synth import generator_config_from_dict, synth_cohort  # noqa: E402


def small_generator_dict(n: int = 400) -> dict:
    """A compact generator with one planted term per feature kind and a women-only term."""
    return {
        "n": n,
        "base_rate": 0.15,
        "female_fraction": 0.45,
        "survival": {"baseline_hazard": 0.01, "horizon_days": 30},
        "features": [
            {"name": "age", "kind": "static-numeric", "clinical_set": "demographic", "unit": "years"},
            {"name": "sex", "kind": "static-categorical", "clinical_set": "demographic"},
            {"name": "heart_rate", "kind": "dynamic-numeric", "clinical_set": "vital-signs",
             "mean": 85.0, "sd": 15.0, "min": 30.0, "max": 220.0, "decimals": 0},
            {"name": "systolic_bp", "kind": "dynamic-numeric", "clinical_set": "hemodynamic",
             "mean": 125.0, "sd": 20.0, "min": 50.0, "max": 240.0, "decimals": 0},
            {"name": "creatinine", "kind": "dynamic-numeric", "clinical_set": "laboratory",
             "mean": 1.1, "sd": 0.4, "min": 0.2, "max": 8.0, "decimals": 2},
            {"name": "urea", "kind": "dynamic-numeric", "clinical_set": "laboratory",
             "mean": 7.0, "sd": 3.0, "min": 1.0, "max": 40.0, "decimals": 1, "missing_rate": 0.1},
            {"name": "cardiac_arrest", "kind": "binary-flag", "clinical_set": "complications", "prevalence": 0.08},
            {"name": "st_deviation", "kind": "binary-flag", "clinical_set": "complications", "prevalence": 0.4},
            {"name": "elevated_enzymes", "kind": "binary-flag", "clinical_set": "laboratory", "prevalence": 0.6},
            {"name": "killip", "kind": "static-categorical", "clinical_set": "hemodynamic",
             "levels": ["I", "II", "III", "IV"], "probabilities": [0.7, 0.15, 0.1, 0.05]},
        ],
        "risk_terms": [
            {"feature": "age", "weight": 1.2},
            {"feature": "creatinine@max", "weight": 0.8},
            {"feature": "systolic_bp@min", "weight": 0.6, "direction": "decreasing"},
            {"feature": "killip=IV", "weight": 1.0, "transform": "threshold", "threshold": 0.5},
            {"feature": "urea@mean", "weight": 1.0, "subgroup": {"sex": "female"}},
        ],
    }


@pytest.fixture(scope="session")
def generator_config():
    """Validated small generator template."""
    return generator_config_from_dict(small_generator_dict())


@pytest.fixture(scope="session")
def cohort(generator_config):
    """Synthetic cohort drawn with seed 7."""
    return synth_cohort(generator_config, seed=7)


@pytest.fixture(scope="session")
def feature_spec(generator_config):
    return generator_config.feature_spec()


@pytest.fixture(scope="session")
def matrix(cohort, feature_spec):
    """Standardized design matrix of the synthetic cohort."""
    return build_matrix(cohort.episodes, feature_spec)


@pytest.fixture
def toy_scores():
    """Four scores with an AUC of 0.75."""
    return np.array([0.1, 0.4, 0.35, 0.8]), np.array([0, 0, 1, 1])
