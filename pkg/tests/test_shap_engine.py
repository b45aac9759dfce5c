"""Tests for Shapley attribution, importances and explanation artifacts."""

from dataclasses import replace

import numpy as np
import pytest
from scipy.special import expit

from explain.artifacts import dependence_data, explain_model, force_explanation, summary_data
from explain.attribution import Attribution, linear_shap, select_background, shapley_exact_attribution
from explain.exact import shapley_exact
from explain.importance import age_bin_labels, age_bins, feature_importance, subgroup_importance
from explain.interactions import interaction_values
from explain.plots import write_dependence_svg, write_force_svg, write_importance_svg, write_summary_svg
from explain.tree_shap import tree_shap_values
from models.base import TrainedModel
from models.config import model_config_from_dict
from models.tree import LEAF
from models.zoo import fit_model
from utils.errors import ValidationError


def _and_model(X):
    X = np.asarray(X)
    return X[:, 0] * X[:, 1]


def _narrow(matrix, n_cols):
    """The first ``n_cols`` columns of a FeatureMatrix."""
    return replace(
        matrix,
        columns=matrix.columns[:n_cols],
        rows=matrix.rows[:, :n_cols],
        means=matrix.means[:n_cols],
        sds=matrix.sds[:n_cols],
    )


def _attribution(values, feature_values, sex=None, age=None, columns=None):
    values = np.asarray(values, dtype=float)
    n, p = values.shape
    return Attribution(
        base_value=0.0,
        values=values,
        feature_values=np.asarray(feature_values, dtype=float),
        columns=columns or [f"f{j}" for j in range(p)],
        row_ids=[f"E{i}" for i in range(n)],
        sex=np.array(sex if sex is not None else ["female"] * n, dtype=object),
        age=np.array(age if age is not None else [60.0] * n, dtype=float),
    )


@pytest.fixture(scope="module")
def small(matrix):
    """Six-column slice of the synthetic matrix."""
    return _narrow(matrix, 6)


@pytest.fixture(scope="module")
def background(small):
    bg, _ = select_background(small, size=20, seed=23)
    return bg


class TestExactShapley:
    """Test coalition enumeration."""

    def test_and_game(self):
        """Test the AND game splits the output evenly and the pair interaction is one half."""
        phi, base = shapley_exact(_and_model, np.array([1.0, 1.0]), np.zeros((1, 2)))
        assert base == 0.0
        assert np.allclose(phi, [0.5, 0.5])
        interactions = interaction_values(_and_model, np.array([1.0, 1.0]), np.zeros((1, 2)))
        assert interactions.values[0, 1] == pytest.approx(0.5)
        assert np.allclose(np.diag(interactions.values), 0.0)
        assert np.allclose(interactions.values.sum(axis=1), interactions.phi)

    def test_additive_model(self):
        """Test an additive function gets each term's deviation from the background mean."""
        f = lambda X: 2.0 * X[:, 0] - 3.0 * X[:, 1] + X[:, 2]  # noqa: E731
        bg = np.array([[0.0, 1.0, 2.0], [2.0, 3.0, 0.0]])
        phi, base = shapley_exact(f, np.array([3.0, 0.0, 5.0]), bg)
        assert np.allclose(phi, [2.0 * 2.0, -3.0 * -2.0, 4.0])
        assert base == pytest.approx(np.mean(f(bg)))

    def test_null_feature_and_symmetry(self):
        """Test an ignored feature gets zero and two interchangeable features get equal values."""
        f = lambda X: X[:, 0] * X[:, 1] + X[:, 0] + X[:, 1]  # noqa: E731
        rng = np.random.default_rng(3)
        bg = rng.normal(size=(8, 3))
        bg[:, 1] = bg[:, 0]
        phi, _ = shapley_exact(f, np.array([0.7, 0.7, -1.2]), bg)
        assert phi[2] == 0.0
        assert phi[0] == pytest.approx(phi[1], abs=1e-12)

    def test_too_many_features(self):
        """Test enumeration is refused above 20 features."""
        with pytest.raises(ValidationError):
            shapley_exact(lambda X: X.sum(axis=1), np.zeros(21), np.zeros((1, 21)))

    def test_interactions_limited_to_twelve(self):
        """Test interaction values are refused above 12 features."""
        with pytest.raises(ValidationError):
            interaction_values(lambda X: X.sum(axis=1), np.zeros(13), np.zeros((1, 13)))


class TestTreeShap:
    """Test the path-walking tree explainer against enumeration."""

    @pytest.mark.parametrize("params", [
        {"learner": "GBT", "n_trees": 8, "max_depth": 3, "learning_rate": 0.3},
        {"learner": "RF", "n_trees": 5, "max_depth": 3},
    ])
    def test_matches_exact(self, small, background, params):
        """Test tree values equal exact enumeration on the same background."""
        model = fit_model(model_config_from_dict({"seed": 13, **params}), small, small.labels)
        rows = small.rows[:5]
        values, base = tree_shap_values(model, rows, background.rows)
        for i in range(rows.shape[0]):
            phi, exact_base = shapley_exact(model, rows[i], background.rows)
            assert np.allclose(values[i], phi, atol=1e-9)
        assert base == pytest.approx(exact_base)

    def test_local_accuracy(self, small, background):
        """Test base plus contributions reproduces the raw output."""
        model = fit_model(
            model_config_from_dict({"learner": "GBT", "n_trees": 10, "max_depth": 3, "seed": 13}),
            small, small.labels,
        )
        attribution = explain_model(model, small.take(np.arange(30)), background)
        assert attribution.method == "tree"
        assert attribution.local_accuracy_error(model, small.take(np.arange(30))) < attribution.tolerance

    def test_forest_attributions_sum_to_margin(self, small, background):
        """Test forest contributions add up to the log-odds margin behind its probabilities."""
        model = fit_model(
            model_config_from_dict({"learner": "RF", "n_trees": 10, "max_depth": 3, "seed": 13}),
            small, small.labels,
        )
        rows = small.take(np.arange(20))
        attribution = explain_model(model, rows, background)
        assert attribution.method == "tree"
        assert np.allclose(attribution.outputs(), model.predict_margin(rows), atol=1e-9)
        assert np.allclose(expit(attribution.outputs()), model.predict_proba(rows), atol=1e-9)

    def test_unused_feature_gets_zero(self, small, background):
        """Test a column no tree splits on receives exactly zero attribution."""
        model = fit_model(
            model_config_from_dict({"learner": "GBT", "n_trees": 2, "max_depth": 1, "seed": 13}),
            small, small.labels,
        )
        used = {int(f) for tree in model.trees for f in tree.feature if f != LEAF}
        unused = [j for j in range(small.n_cols) if j not in used]
        values, _ = tree_shap_values(model, small.rows[:10], background.rows)
        assert unused
        assert np.all(values[:, unused] == 0.0)

    def test_concatenated_ensembles_add(self, small, background):
        """Test explaining two tree lists together equals the sum of explaining each."""
        first = fit_model(
            model_config_from_dict({"learner": "GBT", "n_trees": 4, "max_depth": 2, "seed": 13}),
            small, small.labels,
        )
        second = fit_model(
            model_config_from_dict({"learner": "RF", "n_trees": 3, "max_depth": 3, "seed": 5}),
            small, small.labels,
        )
        combined = TrainedModel(
            config=first.config,
            columns=first.columns,
            base_score=first.base_score + second.base_score,
            trees=first.trees + second.trees,
        )
        rows = small.rows[:6]
        v1, b1 = tree_shap_values(first, rows, background.rows)
        v2, b2 = tree_shap_values(second, rows, background.rows)
        both, base = tree_shap_values(combined, rows, background.rows)
        assert np.allclose(both, v1 + v2, atol=1e-12)
        assert base == pytest.approx(b1 + b2)

    def test_rejects_linear_model(self, small, background):
        """Test a linear model is refused."""
        model = fit_model(model_config_from_dict({"learner": "LR", "seed": 13}), small, small.labels)
        with pytest.raises(ValidationError):
            tree_shap_values(model, small.rows[:2], background.rows)


class TestLinearShap:
    """Test the closed-form linear attribution."""

    @pytest.mark.parametrize("learner", ["LR", "SVM"])
    def test_matches_exact(self, small, background, learner):
        """Test closed-form values equal enumeration, Platt scaling included."""
        model = fit_model(model_config_from_dict({"learner": learner, "seed": 13}), small, small.labels)
        rows = small.take(np.arange(4))
        attribution = linear_shap(model, rows, background)
        exact = shapley_exact_attribution(model, rows, background)
        assert np.allclose(attribution.values, exact.values, atol=1e-9)
        assert attribution.base_value == pytest.approx(exact.base_value)
        assert attribution.local_accuracy_error(model, rows) < 1e-6

    def test_dispatch(self, small, background):
        """Test explain_model picks the linear method for LR."""
        model = fit_model(model_config_from_dict({"learner": "LR", "seed": 13}), small, small.labels)
        assert explain_model(model, small.take([0, 1]), background).method == "linear"


class TestBackground:
    """Test the seeded background sample."""

    def test_seeded_sample(self, matrix):
        """Test the same seed gives the same rows and a reference record."""
        first, ref = select_background(matrix, size=50, seed=23)
        second, _ = select_background(matrix, size=50, seed=23)
        assert first.episode_ids == second.episode_ids
        assert first.n_rows == 50
        assert ref == {"id": "sample:background:23", "seed": 23, "size": 50}

    def test_small_matrix_uses_all_rows(self, matrix):
        """Test a size above the row count takes every row."""
        bg, ref = select_background(matrix.take(np.arange(10)), size=100, seed=1)
        assert bg.n_rows == 10
        assert ref["size"] == 10

    def test_empty_matrix(self, matrix):
        """Test an empty matrix is rejected."""
        with pytest.raises(ValidationError):
            select_background(matrix.take([]), size=10)


class TestImportance:
    """Test mean-|phi| rankings overall and per subgroup."""

    def test_ranking_and_ties(self):
        """Test descending order with ties kept in column order."""
        attribution = _attribution([[1.0, -2.0, 0.5], [-1.0, 0.0, -1.5]], np.zeros((2, 3)))
        ranking = feature_importance(attribution)
        assert ranking.top() == ["f0", "f1", "f2"]
        assert ranking.value_of("f0") == pytest.approx(1.0)
        assert ranking.rank_of("f2") == 3
        assert feature_importance(attribution, aggregate="sum").value_of("f1") == pytest.approx(2.0)

    def test_sum_and_mean_rank_alike(self):
        """Test summed and averaged |phi| give the same order."""
        rng = np.random.default_rng(9)
        attribution = _attribution(rng.normal(size=(40, 6)), np.zeros((40, 6)))
        assert feature_importance(attribution, aggregate="sum").top() == feature_importance(attribution).top()

    def test_empty_attribution(self):
        """Test ranking an empty attribution raises."""
        with pytest.raises(ValidationError):
            feature_importance(_attribution(np.zeros((0, 2)), np.zeros((0, 2))))

    def test_age_bins(self):
        """Test labels and edge placement of the default bins."""
        assert age_bin_labels((50, 60, 70, 80)) == ["<50", "50-59", "60-69", "70-79", ">=80"]
        assert list(age_bins(np.array([49.9, 50.0, 79.0, 80.0]), (50, 60, 70, 80))) == ["<50", "50-59", "70-79", ">=80"]

    def test_sex_subgroups_omit_empty_group(self):
        """Test a group with no rows is omitted and listed."""
        attribution = _attribution([[1.0, 0.0], [0.0, 3.0]], np.zeros((2, 2)), sex=["female", "female"])
        result = subgroup_importance(attribution, "sex")
        assert list(result.rankings) == ["female"]
        assert result.omitted == ["male"]
        assert result.sizes == {"female": 2, "male": 0}
        assert result.rankings["female"].top(1) == ["f1"]

    def test_subgroups_differ(self):
        """Test women and men can rank features differently."""
        attribution = _attribution(
            [[2.0, 0.1], [0.1, 2.0]], np.zeros((2, 2)), sex=["female", "male"], age=[45.0, 85.0]
        )
        result = subgroup_importance(attribution, "sex")
        assert result.rankings["female"].top(1) == ["f0"]
        assert result.rankings["male"].top(1) == ["f1"]
        by_age = subgroup_importance(attribution, "age-bins")
        assert set(by_age.rankings) == {"<50", ">=80"}

    def test_custom_predicate(self):
        """Test custom grouping splits rows into match and rest."""
        attribution = _attribution([[1.0, 0.0], [0.0, 1.0]], np.zeros((2, 2)), age=[45.0, 85.0])
        masks = subgroup_importance(attribution, "custom", predicate=lambda sex, age: age > 80)
        assert masks.sizes == {"match": 1, "rest": 1}

    def test_unknown_grouping(self):
        """Test an unknown grouping is rejected."""
        with pytest.raises(ValidationError):
            subgroup_importance(_attribution([[1.0]], [[0.0]]), "ethnicity")


class TestArtifacts:
    """Test summary, dependence and force data and their SVGs."""

    def test_summary_top_k(self, tmp_path):
        """Test the summary keeps the top-k features with constant colors at 0.5."""
        attribution = _attribution([[1.0, -3.0], [2.0, 1.0]], [[5.0, 1.0], [5.0, 2.0]])
        summary = summary_data(attribution, top_k=1)
        assert [feature["column"] for feature in summary["features"]] == ["f1"]
        assert [point["color"] for point in summary["features"][0]["points"]] == [0.0, 1.0]
        colors = summary_data(attribution)["features"][1]["points"]
        assert {point["color"] for point in colors} == {0.5}
        svg = write_summary_svg(tmp_path / "summary.svg", summary, "abc").read_bytes()
        assert b"<svg" in svg

    def test_dependence_two_columns(self):
        """Test a two-column attribution colors by the other feature."""
        attribution = _attribution([[1.0, 0.0], [0.0, 1.0]], [[1.0, 2.0], [3.0, 4.0]])
        dependence = dependence_data(attribution, "f0")
        assert dependence["color_feature"] == "f1"
        assert dependence["color_method"] == "only-other-feature"
        assert [point["color"] for point in dependence["points"]] == [2.0, 4.0]

    def test_dependence_residual_binning(self, tmp_path):
        """Test the residual heuristic finds the feature phi_0 varies with inside its bins."""
        rng = np.random.default_rng(5)
        x0 = np.repeat([0.0, 1.0], 30)
        x1, x2 = rng.normal(size=60), rng.normal(size=60)
        values = np.column_stack([x0 * x2, 0.1 * x1, 0.1 * x2])
        attribution = _attribution(values, np.column_stack([x0, x1, x2]))
        dependence = dependence_data(attribution, 0)
        assert dependence["color_method"] == "residual-binning"
        assert dependence["color_feature"] == "f2"
        assert dependence["scores"]["f2"] == pytest.approx(0.5)
        svg = write_dependence_svg(tmp_path / "dependence.svg", dependence).read_bytes()
        assert b"<svg" in svg

    def test_dependence_unknown_feature(self):
        """Test an unknown feature name is rejected."""
        with pytest.raises(ValidationError):
            dependence_data(_attribution([[1.0, 0.0]], [[0.0, 0.0]]), "missing")

    def test_force_explanation(self, tmp_path):
        """Test contributions are sorted by |phi| and zero contributions are dropped."""
        model = TrainedModel(
            config=model_config_from_dict({"learner": "LR"}),
            columns=["a", "b", "c"],
            coef=np.array([2.0, 0.0, -1.0]),
            intercept=0.5,
        )
        explanation = force_explanation(model, np.array([1.0, 5.0, 3.0]), np.zeros((1, 3)), row_id="E1")
        assert [c.column for c in explanation.contributions] == ["c", "a"]
        assert [c.phi for c in explanation.contributions] == [-3.0, 2.0]
        assert explanation.base_value == pytest.approx(0.5)
        assert explanation.output_value == pytest.approx(-0.5)
        assert explanation.residual() < 1e-12
        assert explanation.headline() == "base value=0.50, output value=-0.50"
        svg = write_force_svg(tmp_path / "force.svg", explanation, "abc").read_bytes()
        assert b"<svg" in svg

    def test_force_from_matrix_row(self, small, background):
        """Test a one-row matrix supplies the episode id and raw values."""
        model = fit_model(model_config_from_dict({"learner": "LR", "seed": 13}), small, small.labels)
        explanation = force_explanation(model, small.take([0]), background)
        assert explanation.row_id == small.episode_ids[0]
        assert explanation.output_value == pytest.approx(model.raw_output(small.take([0]))[0])
        with pytest.raises(ValidationError):
            force_explanation(model, small.take([0, 1]), background)

    def test_importance_svg(self, tmp_path):
        """Test the importance bar chart is written."""
        ranking = feature_importance(_attribution([[1.0, -2.0]], [[0.0, 0.0]]))
        assert b"<svg" in write_importance_svg(tmp_path / "importance.svg", ranking, "abc").read_bytes()


class TestAttributionFile:
    """Test the attribution CSV."""

    def test_reload_by_episode_id(self, tmp_path, small, background):
        """Test a written attribution reloads with the same values and ids."""
        model = fit_model(model_config_from_dict({"learner": "LR", "seed": 13}), small, small.labels)
        attribution = linear_shap(model, small.take(np.arange(5)), background)
        path = attribution.write_csv(tmp_path / "attribution.csv", "abc")
        assert path.read_text().startswith("# riskbench")
        reloaded = Attribution.read_csv(path, small, method="linear")
        assert reloaded.row_ids == attribution.row_ids
        assert np.allclose(reloaded.values, attribution.values, rtol=1e-8)
        assert reloaded.base_value == pytest.approx(attribution.base_value, rel=1e-8)

    def test_column_mismatch(self, tmp_path, matrix, small, background):
        """Test a CSV whose columns differ from the matrix is rejected."""
        model = fit_model(model_config_from_dict({"learner": "LR", "seed": 13}), small, small.labels)
        path = linear_shap(model, small.take([0]), background).write_csv(tmp_path / "attribution.csv")
        with pytest.raises(ValidationError):
            Attribution.read_csv(path, matrix)
