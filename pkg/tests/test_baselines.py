"""Tests for the GRACE point score, Cox regression and the marker comparison."""

import json
import os

import numpy as np
import pytest

from baselines.cox import CoxFit, cox_gradient, cox_log_likelihood, fit_cox
from baselines.grace import (
    grace_eval,
    grace_input,
    grace_inputs_from_episodes,
    grace_score,
    grace_table_from_dict,
    load_grace_table,
)
from baselines.markers import compare_markers, format_cox_p, subgroup_comparison
from cohort.episodes import RawEpisode
from explain.attribution import Attribution, linear_shap, select_background
from explain.importance import feature_importance
from models.config import model_config_from_dict
from models.zoo import fit_model
from utils.errors import GraceTableError, MarkerRangeError, MissingMarkerError, ValidationError

TABLE_PATH = os.path.join(os.path.dirname(__file__), "..", "config", "grace_points.json")


def _patient(**overrides):
    values = {
        "age": 65, "heart_rate": 95, "systolic_bp": 130, "creatinine": 1.0,
        "cardiac_arrest": False, "st_deviation": True, "elevated_enzymes": True, "killip": "II",
    }
    values.update(overrides)
    return grace_input(values)


@pytest.fixture(scope="module")
def table():
    return load_grace_table(TABLE_PATH)


@pytest.fixture
def table_dict():
    with open(TABLE_PATH, encoding="utf-8") as f:
        return json.load(f)


class TestGraceScore:
    """Test per-patient GRACE totals."""

    def test_reference_profile(self, table):
        """Test a 65-year-old Killip II patient scores 176 (high risk)."""
        score = grace_score(_patient(), table)
        assert score.total == 58 + 15 + 34 + 7 + 28 + 14 + 20
        assert score.risk_band == "high"
        assert [item.marker for item in score.breakdown][-1] == "killip"
        assert next(item for item in score.breakdown if item.marker == "age").band == "[60, 70)"

    def test_minimum_total(self, table):
        """Test the lowest-risk profile still scores the creatinine floor of 1."""
        patient = _patient(age=20, heart_rate=40, systolic_bp=250, creatinine=0.3,
                           st_deviation=False, elevated_enzymes=False, killip="I")
        score = grace_score(patient, table)
        assert score.total == 1
        assert score.risk_band == "low"

    def test_zero_point_bands_total_zero(self, table_dict):
        """Test a table with a 0-point creatinine floor scores the lowest-risk profile 0."""
        table_dict["numeric"]["creatinine"]["bands"][0]["points"] = 0
        patient = _patient(age=20, heart_rate=40, systolic_bp=250, creatinine=0.3,
                           st_deviation=False, elevated_enzymes=False, killip="I")
        score = grace_score(patient, grace_table_from_dict(table_dict))
        assert score.total == 0
        assert all(item.points == 0 for item in score.breakdown)

    def test_band_edges(self, table):
        """Test a value on a band edge falls in the upper band."""
        breakdown = {item.marker: item for item in grace_score(_patient(systolic_bp=80, age=90), table).breakdown}
        assert breakdown["systolic_bp"].points == 53
        assert breakdown["age"].points == 100
        assert breakdown["age"].band == ">=90"

    def test_risk_band_cutoffs(self, table):
        """Test 108 is low, 109 and 140 intermediate, 141 high."""
        bands = table.risk_bands
        assert [bands.category(t) for t in (108, 109, 140, 141)] == ["low", "intermediate", "intermediate", "high"]

    def test_missing_marker(self):
        """Test a missing marker is named instead of imputed."""
        with pytest.raises(MissingMarkerError) as excinfo:
            grace_input({"age": 70})
        assert excinfo.value.marker == "heart_rate"

    def test_invalid_killip(self):
        """Test an unknown Killip class is rejected with its field."""
        with pytest.raises(ValidationError) as excinfo:
            _patient(killip="V")
        assert excinfo.value.field == "killip"

    def test_value_outside_bands(self, table_dict):
        """Test a value below the first band raises MarkerRangeError."""
        table_dict["numeric"]["age"]["bands"][0]["lower"] = 18
        table = grace_table_from_dict(table_dict)
        with pytest.raises(MarkerRangeError):
            grace_score(_patient(age=10), table)


class TestGraceTable:
    """Test point table validation."""

    def test_gap_between_bands(self, table_dict):
        """Test non-contiguous bands are rejected."""
        table_dict["numeric"]["heart_rate"]["bands"][1]["lower"] = 55
        with pytest.raises(GraceTableError):
            grace_table_from_dict(table_dict)

    def test_direction_violated(self, table_dict):
        """Test points rising along a decreasing marker are rejected."""
        table_dict["numeric"]["systolic_bp"]["bands"][-1]["points"] = 70
        with pytest.raises(GraceTableError):
            grace_table_from_dict(table_dict)

    def test_killip_must_not_decrease(self, table_dict):
        """Test Killip points decreasing from I to IV are rejected."""
        table_dict["killip"]["IV"] = 10
        with pytest.raises(GraceTableError):
            grace_table_from_dict(table_dict)

    def test_missing_flag(self, table_dict):
        """Test a table without every flag marker is rejected."""
        del table_dict["flags"]["cardiac_arrest"]
        with pytest.raises(GraceTableError):
            grace_table_from_dict(table_dict)

    def test_unreadable_file(self, tmp_path):
        """Test a malformed file raises GraceTableError."""
        path = tmp_path / "table.json"
        path.write_text("{not json")
        with pytest.raises(GraceTableError):
            load_grace_table(path)


class TestGraceCohort:
    """Test GRACE inputs drawn from cohort episodes."""

    def test_episode_missing_marker_excluded(self, cohort):
        """Test an episode without creatinine is left out."""
        _, kept = grace_inputs_from_episodes(cohort.episodes)
        complete = cohort.episodes[kept[0]]
        incomplete = RawEpisode(
            episode_id="X1", sex="male", age=70.0, length_of_stay=3.0, label=1,
            static_values=dict(complete.static_values),
            dynamic_values={k: v for k, v in complete.dynamic_values.items() if k != "creatinine"},
            dynamic_aggregates={k: v for k, v in complete.dynamic_aggregates.items() if k != "creatinine"},
        )
        inputs, kept = grace_inputs_from_episodes([complete, incomplete])
        assert kept == [0]
        assert len(inputs) == 1

    def test_grace_eval(self, cohort, table):
        """Test GRACE totals are evaluated and compared against a model score."""
        inputs, kept = grace_inputs_from_episodes(cohort.episodes)
        labels = np.array([cohort.episodes[i].label for i in kept])
        ages = np.array([patient.age for patient in inputs])
        report = grace_eval(inputs, labels, table, model_scores={"age": ages}, n_boot=200, seed=19)
        assert report.name == "GRACE"
        assert 0.0 <= report.auc <= 1.0
        assert report.comparisons[0].name == "age"


def _cox_data(n=200, beta=(0.7, -0.4), seed=3):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, len(beta)))
    hazard = np.exp(X @ np.array(beta))
    event_times = np.ceil(rng.exponential(1.0 / hazard) * 10.0)
    censor_times = np.ceil(rng.exponential(2.0, n) * 10.0)
    times = np.maximum(np.minimum(event_times, censor_times), 1.0)
    events = (event_times <= censor_times).astype(int)
    return X, times, events


class TestCox:
    """Test the Efron partial-likelihood fit."""

    def test_gradient_matches_finite_differences(self):
        """Test the analytic gradient against central differences with tied times."""
        X, times, events = _cox_data(n=80)
        beta = np.array([0.3, -0.2])
        grad = cox_gradient(beta, X, times, events)
        h = 1e-6
        numeric = [
            (cox_log_likelihood(beta + h * e, X, times, events) - cox_log_likelihood(beta - h * e, X, times, events)) / (2 * h)
            for e in np.eye(2)
        ]
        assert np.allclose(grad, numeric, atol=1e-5)

    def test_recovers_effects(self):
        """Test the fitted log hazard ratios have the planted signs and are significant."""
        X, times, events = _cox_data(n=400)
        fit = fit_cox(X, times, events, names=["a", "b"])
        assert fit.converged
        assert fit.beta[0] > 0 > fit.beta[1]
        assert fit.p_value("a") < 0.05
        assert fit.to_dict()["covariates"][0]["name"] == "a"

    def test_early_censoring_has_no_effect(self):
        """Test a subject censored before the first death changes nothing."""
        X, times, events = _cox_data(n=100)
        first_death = times[events == 1].min()
        X_extra = np.vstack([X, [[5.0, -5.0]]])
        times_extra = np.append(times, first_death / 2.0)
        events_extra = np.append(events, 0)
        beta = np.array([0.5, 0.1])
        assert cox_log_likelihood(beta, X, times, events) == pytest.approx(
            cox_log_likelihood(beta, X_extra, times_extra, events_extra)
        )
        assert np.allclose(fit_cox(X, times, events).beta, fit_cox(X_extra, times_extra, events_extra).beta)

    def test_matches_lifelines(self):
        """Test coefficients and standard errors against lifelines with Efron ties."""
        lifelines = pytest.importorskip("lifelines")
        import pandas as pd

        X, times, events = _cox_data(n=300)
        fit = fit_cox(X, times, events, names=["a", "b"])
        frame = pd.DataFrame({"a": X[:, 0], "b": X[:, 1], "T": times, "E": events})
        reference = lifelines.CoxPHFitter().fit(frame, duration_col="T", event_col="E")
        assert np.allclose(fit.beta, reference.params_[["a", "b"]].to_numpy(), atol=1e-4)
        assert np.allclose(fit.se, reference.standard_errors_[["a", "b"]].to_numpy(), atol=1e-4)

    def test_separation_flagged(self):
        """Test perfectly separating data is reported as not converged."""
        x = np.array([1.0] * 5 + [0.0] * 5)
        times = np.arange(1.0, 11.0)
        events = np.array([1] * 5 + [0] * 5)
        fit = fit_cox(x, times, events)
        assert not fit.converged
        assert any("separation" in warning for warning in fit.warnings)

    def test_invalid_inputs(self):
        """Test no events, non-positive times and constant covariates are rejected."""
        X = np.array([[0.0], [1.0], [2.0]])
        with pytest.raises(ValidationError):
            fit_cox(X, [1, 2, 3], [0, 0, 0])
        with pytest.raises(ValidationError):
            fit_cox(X, [0, 2, 3], [1, 0, 1])
        with pytest.raises(ValidationError):
            fit_cox(np.ones((3, 1)), [1, 2, 3], [1, 0, 1])


class TestMarkers:
    """Test the SHAP-versus-Cox marker table."""

    def test_p_value_text(self):
        """Test p-value formatting and stars."""
        assert format_cox_p(0.001) == "<0.005*"
        assert format_cox_p(0.03) == "0.030*"
        assert format_cox_p(0.2) == "0.200"
        assert format_cox_p(None) == "n/a"
        assert format_cox_p(float("nan")) == "n/a"

    def test_one_sided_markers_flagged(self):
        """Test a marker missing from one source keeps its row with a flag."""
        attribution = Attribution(
            base_value=0.0, values=np.array([[1.0, 0.5], [3.0, 0.5]]), feature_values=np.zeros((2, 2)),
            columns=["age", "urea@mean"], row_ids=["E1", "E2"],
        )
        fit = CoxFit(
            names=["age", "lactate@max"], beta=np.array([0.5, 0.01]), se=np.array([0.1, 0.5]),
            log_likelihood=-10.0, converged=True, iterations=5, n=2, n_events=1,
        )
        comparison = compare_markers(
            {"female": feature_importance(attribution)}, {"female": fit},
            ["age", "urea@mean", "lactate@max"], diagnosis="NSTEMI",
        )
        assert comparison.cell("age", "female").mean_abs_shap == pytest.approx(2.0)
        assert comparison.cell("age", "female").significant
        assert comparison.cell("urea@mean", "female").flag == "shap-only"
        assert comparison.cell("lactate@max", "female").flag == "cox-only"
        markdown = comparison.to_markdown()
        assert markdown.startswith("**NSTEMI**")
        assert "| age | 2.00 | <0.005* |" in markdown
        assert comparison.to_frame().shape == (3, 7)

    def test_subgroup_comparison(self, matrix, tmp_path):
        """Test per-sex SHAP rankings and Cox fits on the same rows."""
        model = fit_model(model_config_from_dict({"learner": "LR", "seed": 13}), matrix, matrix.labels)
        background, _ = select_background(matrix, size=50, seed=23)
        attribution = linear_shap(model, matrix, background)
        comparison = subgroup_comparison(attribution, matrix, n_markers=4, diagnosis="synthetic")
        assert comparison.groups == ["female", "male"]
        assert len(comparison.markers) == 4
        assert set(comparison.cox_fits) == {"female", "male"}
        comparison.write(tmp_path / "markers.csv", tmp_path / "markers.md", "abc")
        markdown = (tmp_path / "markers.md").read_text()
        assert markdown.splitlines()[0].endswith("config=abc -->")
        assert "women SHAP" in markdown
        assert (tmp_path / "markers.csv").read_text().splitlines()[1].startswith("marker,diagnosis,group")
