"""Tests for the cohort contract: CSV I/O, matrices, splits, summaries and synthetic cohorts."""

import copy

import numpy as np
import pytest

from cohort.episodes import RawEpisode, load_episodes, write_episodes
from cohort.matrix import MatrixTransform, build_matrix, split_holdout, split_matrices
from cohort.spec import FeatureSpec, feature_spec_from_dict, load_feature_spec
from cohort.summary import summarize_cohort, welch_test
from cohort.synth import generator_config_from_dict, synth_cohort, truth_path_for, write_truth
from utils.artifacts import read_json
from utils.errors import (
    CohortFormatError,
    ColumnMismatchError,
    DegenerateSplitError,
    DuplicateEpisodeError,
    ValidationError,
)

from conftest import small_generator_dict

SPEC = [
    FeatureSpec("age", "static-numeric", "demographic"),
    FeatureSpec("sex", "static-categorical", "demographic", levels=("female", "male")),
    FeatureSpec("heart_rate", "dynamic-numeric", "vital-signs"),
    FeatureSpec("diabetes", "binary-flag", "complications"),
    FeatureSpec("killip", "static-categorical", "hemodynamic", levels=("I", "II", "III", "IV")),
]

HEADER = (
    "episode_id,sex,age,los_days,label,heart_rate@min,heart_rate@max,heart_rate@mean,diabetes,killip\n"
)


def _write(path, body: str):
    path.write_text(HEADER + body, encoding="utf-8")
    return path


def _age_only_episodes(n: int, positives: int):
    """Episodes with a single informative column, labels 1 for the first ``positives``."""
    return [
        RawEpisode(
            episode_id=f"E{i:05d}", sex="female" if i % 2 else "male", age=40.0 + (i % 50),
            length_of_stay=3.0, label=int(i < positives),
        )
        for i in range(n)
    ]


class TestFeatureSpec:
    """Test feature spec parsing."""

    def test_unknown_kind_rejected(self):
        """Test an unknown feature kind names the feature."""
        with pytest.raises(ValidationError) as exc_info:
            feature_spec_from_dict({"name": "hb", "kind": "text", "clinical_set": "laboratory"})
        assert "hb" in str(exc_info.value)

    def test_unknown_clinical_set_rejected(self):
        """Test clinical sets outside the eight known ones are rejected."""
        with pytest.raises(ValidationError):
            feature_spec_from_dict({"name": "hb", "kind": "static-numeric", "clinical_set": "imaging"})

    def test_sex_gets_default_levels(self):
        """Test the core sex feature defaults to female/male."""
        spec = feature_spec_from_dict({"name": "sex", "kind": "static-categorical", "clinical_set": "demographic"})
        assert spec.levels == ("female", "male")

    def test_dynamic_feature_csv_columns(self):
        """Test a dynamic feature occupies min/max/mean columns."""
        assert SPEC[2].csv_columns() == ["heart_rate@min", "heart_rate@max", "heart_rate@mean"]

    def test_demo_feature_spec_loads(self):
        """Test the shipped demo spec parses."""
        from conftest import PROJECT_ROOT
        import os
        specs = load_feature_spec(os.path.join(PROJECT_ROOT, "config", "demo_features.json"))
        assert {spec.name for spec in specs} >= {"age", "sex", "heart_rate", "killip"}


class TestLoadEpisodes:
    """Test reading episode CSVs."""

    def test_reads_rows(self, tmp_path):
        """Test a well-formed file parses into episodes."""
        path = _write(tmp_path / "c.csv", "E1,female,70,5,1,60,90,75,1,II\nE2,male,55,3.5,0,,,,,\n")
        episodes = load_episodes(path, SPEC)
        assert [e.episode_id for e in episodes] == ["E1", "E2"]
        assert episodes[0].aggregate("heart_rate", "max") == 90.0
        assert episodes[0].static_values == {"diabetes": 1, "killip": "II"}
        assert episodes[1].aggregate("heart_rate", "mean") is None

    def test_comment_lines_skipped(self, tmp_path):
        """Test leading provenance comments are ignored."""
        path = tmp_path / "c.csv"
        path.write_text("# riskbench 0.1.0 config=abc\n" + HEADER + "E1,female,70,5,1,60,90,75,1,II\n")
        assert len(load_episodes(path, SPEC)) == 1

    def test_duplicate_episode_names_line(self, tmp_path):
        """Test a duplicate episode_id raises with the line number."""
        path = _write(tmp_path / "c.csv", "E1,female,70,5,1,60,90,75,1,II\nE1,male,55,3,0,,,,,\n")
        with pytest.raises(DuplicateEpisodeError) as exc_info:
            load_episodes(path, SPEC)
        assert exc_info.value.line == 3
        assert exc_info.value.column == "episode_id"

    def test_bad_sex_names_column(self, tmp_path):
        """Test an invalid sex value names line and column."""
        path = _write(tmp_path / "c.csv", "E1,unknown,70,5,1,60,90,75,1,II\n")
        with pytest.raises(CohortFormatError) as exc_info:
            load_episodes(path, SPEC)
        assert exc_info.value.column == "sex"
        assert exc_info.value.line == 2

    def test_undeclared_level_rejected(self, tmp_path):
        """Test a categorical value outside the declared levels is rejected."""
        path = _write(tmp_path / "c.csv", "E1,female,70,5,1,60,90,75,1,V\n")
        with pytest.raises(CohortFormatError) as exc_info:
            load_episodes(path, SPEC)
        assert exc_info.value.column == "killip"

    def test_missing_core_column(self, tmp_path):
        """Test a file without the label column is rejected."""
        path = tmp_path / "c.csv"
        path.write_text("episode_id,sex,age,los_days\nE1,female,70,5\n")
        with pytest.raises(CohortFormatError) as exc_info:
            load_episodes(path, SPEC)
        assert exc_info.value.column == "label"

    def test_non_binary_label(self, tmp_path):
        """Test labels other than 0/1 are rejected."""
        path = _write(tmp_path / "c.csv", "E1,female,70,5,2,60,90,75,1,II\n")
        with pytest.raises(CohortFormatError):
            load_episodes(path, SPEC)

    def test_long_format_sequences(self, tmp_path):
        """Test a long-format companion fills dynamic sequences."""
        path = _write(tmp_path / "c.csv", "E1,female,70,5,1,,,,1,II\n")
        long_path = tmp_path / "long.csv"
        long_path.write_text("episode_id,feature,timestamp,value\nE1,heart_rate,1,80\nE1,heart_rate,2,100\n")
        episodes = load_episodes(path, SPEC, long_format=long_path)
        assert episodes[0].aggregate("heart_rate", "mean") == 90.0

    def test_long_format_decreasing_timestamps(self, tmp_path):
        """Test timestamps must not decrease within a sequence."""
        path = _write(tmp_path / "c.csv", "E1,female,70,5,1,,,,1,II\n")
        long_path = tmp_path / "long.csv"
        long_path.write_text("episode_id,feature,timestamp,value\nE1,heart_rate,5,80\nE1,heart_rate,2,100\n")
        with pytest.raises(CohortFormatError):
            load_episodes(path, SPEC, long_format=long_path)

    def test_write_then_load_preserves_episodes(self, tmp_path, cohort, feature_spec):
        """Test the synthetic cohort survives a write/load cycle."""
        path = tmp_path / "cohort.csv"
        write_episodes(cohort.episodes, path, feature_spec, config_hash="abc123")
        assert path.read_text().startswith("# riskbench")
        loaded = load_episodes(path, feature_spec)
        assert [e.episode_id for e in loaded] == [e.episode_id for e in cohort.episodes]
        assert [e.label for e in loaded] == [e.label for e in cohort.episodes]
        original, reread = cohort.episodes[3], loaded[3]
        assert reread.aggregate("creatinine", "max") == pytest.approx(original.aggregate("creatinine", "max"))
        assert reread.survival_time == pytest.approx(original.survival_time)

    def test_round_trip_is_byte_identical(self, tmp_path):
        """Test loading and rewriting a file keeps every byte, non-canonical numerals included."""
        source = _write(tmp_path / "in.csv", "E1,female,70,2.50,1,60,90,75.0,1,II\nE2,male,81.0,3,0,,,,0,\n")
        target = write_episodes(load_episodes(source, SPEC), tmp_path / "out.csv", SPEC)
        assert target.read_bytes() == source.read_bytes()

    def test_changed_value_rewritten(self, tmp_path):
        """Test an edited value is written in canonical form."""
        episodes = load_episodes(_write(tmp_path / "in.csv", "E1,female,70.0,2.50,1,60,90,75.0,1,II\n"), SPEC)
        episodes[0].age = 71.5
        text = write_episodes(episodes, tmp_path / "out.csv", SPEC).read_text()
        assert text.splitlines()[1] == "E1,female,71.5,2.50,1,60,90,75.0,1,II"


class TestBuildMatrix:
    """Test matrix expansion, imputation and standardization."""

    def test_column_layout(self, matrix):
        """Test dynamic, categorical and flag features expand as documented."""
        names = matrix.column_names
        assert "heart_rate@min" in names and "heart_rate@mean" in names
        assert "killip=IV" in names and "sex=female" in names
        assert "cardiac_arrest" in names

    def test_standardized_columns(self, matrix):
        """Test non-constant columns have mean 0 and population sd 1."""
        active = ~matrix.constant_mask
        assert np.allclose(matrix.rows[:, active].mean(axis=0), 0.0, atol=1e-9)
        assert np.allclose(matrix.rows[:, active].std(axis=0), 1.0, atol=1e-9)

    def test_missing_values_imputed_to_mean(self, cohort, matrix):
        """Test a missing urea entry becomes 0 after standardization."""
        j = matrix.column_index("urea@mean")
        missing = [i for i, e in enumerate(cohort.episodes) if e.aggregate("urea", "mean") is None]
        assert missing
        assert np.allclose(matrix.rows[missing, j], 0.0)
        assert 0 < matrix.columns[j].imputed_fraction < 0.5

    def test_deleting_missing_entry_changes_nothing(self, cohort, feature_spec, matrix):
        """Test clearing an entry that is already missing leaves the matrix unchanged."""
        episodes = copy.deepcopy(cohort.episodes)
        target = next(e for e in episodes if e.aggregate("urea", "mean") is None)
        target.dynamic_values.pop("urea", None)
        target.dynamic_aggregates.pop("urea", None)
        target.static_values.pop("urea", None)
        rebuilt = build_matrix(episodes, feature_spec)
        assert np.array_equal(rebuilt.rows, matrix.rows)
        assert np.array_equal(rebuilt.means, matrix.means)

    def test_permutation_equivariant(self, cohort, feature_spec, matrix):
        """Test shuffling episodes shuffles rows and keeps every column statistic."""
        order = np.random.default_rng(8).permutation(len(cohort.episodes))
        shuffled = build_matrix([cohort.episodes[i] for i in order], feature_spec)
        assert np.allclose(shuffled.rows, matrix.rows[order], atol=1e-9)
        assert np.allclose(shuffled.means, matrix.means, atol=1e-9)
        assert np.allclose(shuffled.sds, matrix.sds, atol=1e-9)
        assert np.array_equal(shuffled.labels, matrix.labels[order])
        assert [c.imputed_fraction for c in shuffled.columns] == pytest.approx(
            [c.imputed_fraction for c in matrix.columns]
        )

    def test_raw_values_invert_standardization(self, cohort, matrix):
        """Test raw_values returns the original observed values."""
        j = matrix.column_index("age")
        assert np.allclose(matrix.raw_values()[:, j], [e.age for e in cohort.episodes])

    def test_constant_column_flagged(self):
        """Test a column with one observed value is flagged constant and zeroed."""
        episodes = _age_only_episodes(10, 3)
        for e in episodes:
            e.static_values["diabetes"] = 1
        spec = [SPEC[0], FeatureSpec("diabetes", "binary-flag", "complications")]
        m = build_matrix(episodes, spec)
        j = m.column_index("diabetes")
        assert m.columns[j].constant
        assert np.all(m.rows[:, j] == 0.0)

    def test_feature_without_observations(self):
        """Test a feature with no observed value is rejected."""
        spec = [SPEC[0], FeatureSpec("diabetes", "binary-flag", "complications")]
        with pytest.raises(ValidationError):
            build_matrix(_age_only_episodes(10, 3), spec)

    def test_clinical_set_filter(self, cohort, feature_spec):
        """Test restricting to one clinical set keeps only its columns."""
        m = build_matrix(cohort.episodes, feature_spec, clinical_sets=["laboratory"])
        assert set(m.column_names) == {
            "creatinine@min", "creatinine@max", "creatinine@mean",
            "urea@min", "urea@max", "urea@mean", "elevated_enzymes",
        }

    def test_transform_detects_column_mismatch(self, matrix):
        """Test checking columns against a different list raises."""
        with pytest.raises(ColumnMismatchError) as exc_info:
            matrix.check_columns(matrix.column_names[1:])
        assert exc_info.value.extra == [matrix.column_names[0]]


class TestSplit:
    """Test the seeded holdout split."""

    @pytest.fixture(scope="class")
    def large(self):
        return build_matrix(_age_only_episodes(1299, 88), [SPEC[0]])

    def test_test_size_rounds_half_up(self, large):
        """Test |test| = round-half-up(0.2 * 1299) = 260."""
        split = split_holdout(large, 0.2, seed=11)
        assert split.test_rows.size == 260
        assert split.train_rows.size == 1039

    def test_partitions_disjoint_and_complete(self, large):
        """Test train and test cover every row exactly once."""
        split = split_holdout(large, 0.2, seed=11)
        both = np.concatenate([split.train_rows, split.test_rows])
        assert np.array_equal(np.sort(both), np.arange(1299))

    def test_same_seed_same_split(self, large):
        """Test the split is a pure function of the seed."""
        a, b = split_holdout(large, 0.2, seed=3), split_holdout(large, 0.2, seed=3)
        assert np.array_equal(a.test_rows, b.test_rows)
        assert not np.array_equal(a.test_rows, split_holdout(large, 0.2, seed=4).test_rows)

    def test_stratified_keeps_prevalence(self, large):
        """Test the stratified split puts round(0.2 * 88) positives in test."""
        split = split_holdout(large, 0.2, seed=11, stratify=True)
        assert int(large.labels[split.test_rows].sum()) == 18

    def test_degenerate_split(self):
        """Test a split that leaves one partition single-class raises."""
        m = build_matrix(_age_only_episodes(10, 1), [SPEC[0]])
        with pytest.raises(DegenerateSplitError):
            for seed in range(50):
                split_holdout(m, 0.2, seed=seed)

    def test_too_few_rows(self):
        """Test fewer than five rows are rejected."""
        m = build_matrix(_age_only_episodes(4, 2), [SPEC[0]])
        with pytest.raises(ValidationError):
            split_holdout(m, 0.5, seed=0)

    def test_strict_mode_fits_on_train(self, cohort, feature_spec):
        """Test strict preprocessing standardizes with training statistics only."""
        train, test, split = split_matrices(cohort.episodes, feature_spec, 0.2, seed=11, strict=True)
        j = train.column_index("age")
        train_ages = np.array([cohort.episodes[i].age for i in split.train_rows])
        assert train.means[j] == pytest.approx(train_ages.mean())
        assert test.means[j] == pytest.approx(train.means[j])
        assert test.column_names == train.column_names

    def test_default_mode_uses_full_cohort(self, cohort, feature_spec, matrix):
        """Test the default split reuses full-cohort statistics."""
        train, test, _ = split_matrices(cohort.episodes, feature_spec, 0.2, seed=11)
        assert np.allclose(train.means, matrix.means)


class TestSummary:
    """Test the sex-split cohort summary."""

    def test_counts(self, cohort, feature_spec):
        """Test group sizes and deaths add up."""
        summary = summarize_cohort(cohort.episodes, feature_spec)
        assert summary.n["female"] + summary.n["male"] == summary.n["all"] == len(cohort.episodes)
        assert summary.deaths["all"] == sum(e.label for e in cohort.episodes)

    def test_markdown_header(self, cohort, feature_spec):
        """Test the Markdown table names both sexes."""
        text = summarize_cohort(cohort.episodes, feature_spec).to_markdown()
        assert text.startswith("| Feature | Women (n=")
        assert "heart_rate@mean" in text

    def test_welch_identical_samples(self):
        """Test the Welch test on two identical samples gives t = 0 and p = 1."""
        sample = np.array([1.0, 2.5, 3.0, 4.5, 7.0])
        statistic, p_value = welch_test(sample, sample.copy())
        assert statistic == 0.0
        assert p_value == pytest.approx(1.0)

    def test_one_sex_rejected(self):
        """Test a cohort without men is rejected."""
        episodes = [e for e in _age_only_episodes(10, 3) if e.sex == "female"]
        with pytest.raises(ValidationError):
            summarize_cohort(episodes)


class TestSynth:
    """Test synthetic cohort generation."""

    def test_deterministic(self, generator_config):
        """Test the same seed reproduces the cohort."""
        a = synth_cohort(generator_config, seed=5)
        b = synth_cohort(generator_config, seed=5)
        assert [e.label for e in a.episodes] == [e.label for e in b.episodes]
        assert a.episodes[0].dynamic_values == b.episodes[0].dynamic_values

    def test_base_rate_respected(self, cohort):
        """Test the empirical mortality is close to the configured base rate."""
        assert cohort.truth["empirical_rate"] == pytest.approx(0.15, abs=0.06)

    def test_survival_times(self, cohort):
        """Test every episode carries a positive survival time within 30 days."""
        times = np.array([e.survival_time for e in cohort.episodes])
        assert np.all(times > 0) and np.all(times <= 30.0 + 1e-9)

    def test_planted_term_on_unknown_column(self):
        """Test a planted weight on an undeclared column is rejected."""
        data = small_generator_dict()
        data["risk_terms"].append({"feature": "lactate@max", "weight": 1.0})
        with pytest.raises(ValidationError):
            generator_config_from_dict(data)

    def test_truth_sidecar(self, tmp_path, cohort):
        """Test the truth file sits next to the cohort and lists the planted terms."""
        target = truth_path_for(tmp_path / "cohort.csv")
        assert target.name == "cohort.truth.json"
        write_truth(target, cohort.truth, "abc")
        truth = read_json(target)
        assert [term["feature"] for term in truth["terms"]][0] == "age"
        assert truth["_meta"]["config_hash"] == "abc"
