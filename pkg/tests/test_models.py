"""Tests for class weights, model configs and the four learners."""

import json
from fractions import Fraction

import numpy as np
import pytest
from scipy.optimize import minimize

from cohort.matrix import build_matrix
from cohort.synth import generator_config_from_dict, synth_cohort
from eval.roc import auc_score
from models.base import TrainedModel
from models.config import model_config_from_dict, paper_grid, validate_paper_legal
from models.forest import LEAF_CLIP, leaf_log_odds
from models.linear import logistic_loss, penalized_objective, squared_hinge_loss
from models.weights import class_weights
from models.zoo import fit_model
from utils.errors import ColumnMismatchError, ModelFormatError, SingleClassError, ValidationError


def _labels(n: int, positives: int) -> np.ndarray:
    return np.array([1] * positives + [0] * (n - positives))


def _fit(matrix, **params):
    config = model_config_from_dict({"seed": 13, **params})
    return fit_model(config, matrix, matrix.labels)


class TestClassWeights:
    """Test balanced class weights."""

    def test_nstemi_counts(self):
        """Test weights for 1299 episodes with 88 deaths."""
        weights = class_weights(_labels(1299, 88))
        assert weights.w1 == pytest.approx(7.3807, abs=1e-4)
        assert weights.w0 == pytest.approx(0.5363, abs=1e-4)

    def test_stemi_counts(self):
        """Test weights for 2820 episodes with 260 deaths."""
        assert class_weights(_labels(2820, 260)).w1 == pytest.approx(5.4231, abs=1e-4)

    def test_classes_carry_equal_total_weight(self):
        """Test n0 * w0 == n1 * w1 == n / 2 exactly."""
        weights = class_weights(_labels(1299, 88))
        w0, w1 = weights.exact()
        assert w0 * 1211 == w1 * 88 == Fraction(1299, 2)

    def test_single_class(self):
        """Test a one-class label vector is rejected."""
        with pytest.raises(SingleClassError):
            class_weights([0, 0, 0])


class TestModelConfig:
    """Test model config parsing and the study grids."""

    def test_learner_case_insensitive(self):
        """Test lowercase learner names are accepted."""
        assert model_config_from_dict({"learner": "gbt"}).learner == "GBT"

    def test_foreign_field_rejected(self):
        """Test a field of another learner is rejected."""
        with pytest.raises(ValidationError):
            model_config_from_dict({"learner": "RF", "C": 1.0})

    def test_unknown_learner(self):
        """Test an unknown learner is rejected."""
        with pytest.raises(ValidationError):
            model_config_from_dict({"learner": "KNN"})

    def test_out_of_range_value(self):
        """Test subsample outside (0, 1] is rejected."""
        with pytest.raises(ValidationError):
            model_config_from_dict({"learner": "GBT", "subsample": 0.0})

    def test_paper_grid_sizes(self):
        """Test the study grids enumerate 1080 GBT and 21 LR configurations."""
        def size(learner):
            axes = paper_grid(learner)
            return int(np.prod([len(values) for values in axes.values()]))
        assert size("gbt") == 1080
        assert size("lr") == 21
        assert size("svm") == 14
        assert size("rf") == 9

    def test_n_trees_override_accepted(self):
        """Test n_trees=250 is accepted as a manual override."""
        config = model_config_from_dict({
            "learner": "GBT", "n_trees": 250, "learning_rate": 0.1, "subsample": 0.8,
            "dropout_rate": 0.3, "gamma": 10.0, "max_depth": 4,
        })
        assert validate_paper_legal(config) == ["n_trees"]

    def test_off_grid_value_rejected(self):
        """Test a grid axis value outside the study's grid raises."""
        config = model_config_from_dict({"learner": "RF", "n_trees": 75, "max_depth": 4})
        with pytest.raises(ValidationError):
            validate_paper_legal(config)


class TestLinear:
    """Test logistic regression and the linear SVM."""

    def test_logistic_learns_signal(self, matrix):
        """Test LR ranks the synthetic outcome well."""
        model = _fit(matrix, learner="LR", penalty="l2", C=1.0)
        assert auc_score(model.predict_score(matrix), matrix.labels) > 0.7
        proba = model.predict_proba(matrix)
        assert np.all((proba > 0) & (proba < 1))

    def test_l2_solution_matches_reference_optimizer(self, matrix):
        """Test the l2 objective reached agrees with L-BFGS on the same objective."""
        model = _fit(matrix, learner="LR", penalty="l2", C=1.0, tol=1e-9, max_iter=20000)
        X, y = matrix.rows, matrix.labels.astype(float)
        s = class_weights(matrix.labels).sample_weights(matrix.labels)
        params = np.append(model.coef, model.intercept)
        reference = minimize(
            penalized_objective, np.zeros(X.shape[1] + 1), args=(X, y, s, model.config), method="L-BFGS-B",
            options={"maxiter": 5000, "ftol": 1e-14, "gtol": 1e-10},
        )
        ours = penalized_objective(params, X, y, s, model.config)
        assert ours <= reference.fun + 1e-6

    def test_strong_l1_zeroes_coefficients(self, matrix):
        """Test a tiny C with the l1 penalty yields an all-zero coefficient vector."""
        model = _fit(matrix, learner="LR", penalty="l1", C=0.0001)
        assert np.all(model.coef == 0.0)

    def test_svm_score_is_raw_margin(self, matrix):
        """Test SVM scores are the uncalibrated margin and Platt slope is positive."""
        model = _fit(matrix, learner="SVM", penalty="l2", C=1.0)
        assert np.allclose(model.predict_score(matrix), model.decision_function(matrix))
        a, _ = model.platt
        assert a > 0
        assert auc_score(model.predict_score(matrix), matrix.labels) > 0.7

    def test_column_mismatch_on_predict(self, matrix):
        """Test predicting with a different column count raises."""
        model = _fit(matrix, learner="LR")
        with pytest.raises(ColumnMismatchError):
            model.predict_score(matrix.rows[:, 1:])


class TestRandomForest:
    """Test the class-weighted random forest."""

    @pytest.fixture(scope="class")
    def forest(self, matrix):
        return _fit(matrix, learner="RF", n_trees=25, max_depth=4)

    def test_shape(self, forest):
        """Test tree count, per-tree scale and depth bound."""
        assert len(forest.trees) == 25
        assert all(tree.scale == pytest.approx(1 / 25) for tree in forest.trees)
        assert forest.max_depth() <= 4

    def test_probabilities_inside_unit_interval(self, forest, matrix):
        """Test probabilities lie strictly inside (0, 1)."""
        proba = forest.predict_proba(matrix)
        assert np.all((proba > 0) & (proba < 1))

    def test_oob_auc_recorded(self, forest):
        """Test the out-of-bag AUC is stored in the metadata."""
        assert 0.0 <= forest.metadata["oob_auc"] <= 1.0

    def test_deterministic(self, forest, matrix):
        """Test the same seed grows the same forest."""
        again = _fit(matrix, learner="RF", n_trees=25, max_depth=4)
        assert np.array_equal(forest.predict_score(matrix), again.predict_score(matrix))

    def test_probability_is_expit_of_margin(self, forest, matrix):
        """Test probabilities are the logistic map of the mean leaf log-odds."""
        margin = forest.predict_margin(matrix)
        leaf_log_odds = [tree.value[tree.leaves(matrix.rows)] for tree in forest.trees]
        assert np.allclose(margin, np.mean(leaf_log_odds, axis=0))
        assert np.allclose(forest.predict_proba(matrix), 1.0 / (1.0 + np.exp(-margin)))

    def test_pure_leaf_log_odds_clipped(self):
        """Test a pure node stores the clipped log-odds and an empty node stores zero."""
        assert leaf_log_odds(5.0, 5.0) == pytest.approx(np.log((1 - LEAF_CLIP) / LEAF_CLIP))
        assert leaf_log_odds(0.0, 5.0) == pytest.approx(-np.log((1 - LEAF_CLIP) / LEAF_CLIP))
        assert leaf_log_odds(1.0, 2.0) == 0.0
        assert leaf_log_odds(0.0, 0.0) == 0.0


class TestGradientBoosting:
    """Test boosted trees with DART dropout."""

    def test_output_is_base_plus_trees(self, matrix):
        """Test the raw output is the base score plus scaled tree outputs."""
        model = _fit(matrix, learner="GBT", n_trees=15, max_depth=3, learning_rate=0.3)
        expected = model.base_score + sum(tree.predict(matrix.rows) for tree in model.trees)
        assert np.allclose(model.raw_output(matrix), expected)
        assert model.max_depth() <= 3

    def test_no_dropout_scales_by_learning_rate(self, matrix):
        """Test every tree keeps scale eta without dropout."""
        model = _fit(matrix, learner="GBT", n_trees=5, max_depth=2, learning_rate=0.1)
        assert all(tree.scale == pytest.approx(0.1) for tree in model.trees)

    def test_dart_records_drops(self, matrix):
        """Test DART dropout rescales and records the number dropped per round."""
        model = _fit(matrix, learner="GBT", n_trees=10, max_depth=2, learning_rate=0.1, dropout_rate=0.5)
        drops = model.metadata["dart_drops"]
        assert len(drops) == len(model.trees) == 10
        assert drops[0] == 0
        if any(drops[1:]):
            assert any(tree.scale < 0.1 - 1e-12 for tree in model.trees)

    def test_gamma_blocks_every_split(self, matrix):
        """Test a huge gamma leaves a base-score-only model."""
        model = _fit(matrix, learner="GBT", n_trees=5, max_depth=3, gamma=1e9)
        assert model.trees == []
        assert np.allclose(model.raw_output(matrix), model.base_score)

    def test_learns_signal(self, matrix):
        """Test boosted trees rank the synthetic outcome well."""
        model = _fit(matrix, learner="GBT", n_trees=30, max_depth=3, learning_rate=0.3, subsample=0.8)
        assert auc_score(model.predict_score(matrix), matrix.labels) > 0.75


class TestPersistence:
    """Test model files."""

    def test_save_and_load_predict_identically(self, tmp_path, matrix):
        """Test a reloaded model gives identical scores."""
        model = _fit(matrix, learner="GBT", n_trees=5, max_depth=2)
        path = model.save(tmp_path / "model.json", "hash1")
        reloaded = TrainedModel.load(path)
        assert np.array_equal(reloaded.predict_score(matrix), model.predict_score(matrix))
        assert json.loads(path.read_text())["_meta"]["config_hash"] == "hash1"

    def test_unsupported_format_version(self, tmp_path, matrix):
        """Test an unknown format version is rejected."""
        data = _fit(matrix, learner="LR").to_dict()
        data["format_version"] = 99
        with pytest.raises(ModelFormatError):
            TrainedModel.from_dict(data)

    def test_tree_split_beyond_columns(self, matrix):
        """Test a tree referencing a missing column is rejected."""
        data = _fit(matrix, learner="GBT", n_trees=2, max_depth=2).to_dict()
        data["columns"] = []
        with pytest.raises(ModelFormatError):
            TrainedModel.from_dict(data)


class TestDuplicationInvariance:
    """Test fits are unchanged when every training row appears twice."""

    @pytest.mark.parametrize("params", [
        {"learner": "LR", "penalty": "l2", "C": 1.0, "tol": 1e-10, "max_iter": 20000},
        {"learner": "LR", "penalty": "l1", "C": 0.1, "tol": 1e-10, "max_iter": 20000},
        {"learner": "SVM", "penalty": "l2", "C": 1.0, "tol": 1e-10, "max_iter": 20000},
        {"learner": "GBT", "n_trees": 10, "max_depth": 3, "learning_rate": 0.3},
        {"learner": "GBT", "n_trees": 10, "max_depth": 3, "learning_rate": 0.3, "dropout_rate": 0.3, "gamma": 1.0},
    ])
    def test_doubled_rows_same_probabilities(self, matrix, params):
        """Test probabilities agree within 1e-6 after duplicating the training set."""
        doubled = matrix.take(np.tile(np.arange(matrix.n_rows), 2))
        once = _fit(matrix, **params)
        twice = _fit(doubled, **params)
        assert np.allclose(once.predict_proba(matrix), twice.predict_proba(matrix), rtol=0.0, atol=1e-6)

    def test_reference_weights_sum_is_fixed(self):
        """Test reference weights total the same mass for any row count."""
        labels = _labels(300, 40)
        weights = class_weights(labels)
        doubled = np.tile(labels, 2)
        assert weights.reference_weights(labels).sum() == pytest.approx(1000.0)
        assert class_weights(doubled).reference_weights(doubled).sum() == pytest.approx(1000.0)


class TestRegularizationPath:
    """Test the training data loss along increasing C."""

    @pytest.mark.parametrize("learner,loss", [("LR", logistic_loss), ("SVM", squared_hinge_loss)])
    def test_data_loss_non_increasing(self, matrix, learner, loss):
        """Test weaker l2 regularization never raises the weighted training loss."""
        X, y = matrix.rows, matrix.labels.astype(float)
        s = class_weights(matrix.labels).sample_weights(matrix.labels)
        losses = []
        for C in (0.01, 0.03, 0.1, 0.3, 1.0):
            model = _fit(matrix, learner=learner, penalty="l2", C=C, tol=1e-10, max_iter=20000)
            losses.append(loss(np.append(model.coef, model.intercept), X, y, s))
        assert all(later <= earlier + 1e-6 for earlier, later in zip(losses, losses[1:]))


@pytest.mark.slow
class TestPlantedEffect:
    """Test a planted log-odds effect is recovered."""

    def test_logistic_recovers_weight(self):
        """Test LR finds a planted +2.0 per-sd urea effect on 10,000 episodes within 0.3."""
        template = generator_config_from_dict({
            "n": 10000,
            "base_rate": 0.3,
            "female_fraction": 0.5,
            "features": [
                {"name": "age", "kind": "static-numeric", "clinical_set": "demographic"},
                {"name": "sex", "kind": "static-categorical", "clinical_set": "demographic"},
                {"name": "urea", "kind": "static-numeric", "clinical_set": "laboratory",
                 "mean": 2.0, "sd": 1.0},
            ],
            "risk_terms": [{"feature": "urea", "weight": 2.0}],
        })
        cohort = synth_cohort(template, seed=11)
        matrix = build_matrix(cohort.episodes, template.feature_spec())
        model = _fit(matrix, learner="LR", penalty="l2", C=100.0, tol=1e-9, max_iter=20000)
        assert model.coef[matrix.column_index("urea")] == pytest.approx(2.0, abs=0.3)
