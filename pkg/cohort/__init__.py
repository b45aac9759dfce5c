"""Cohort data contract, matrix construction, summaries and synthetic cohorts."""

from cohort.spec import FeatureSpec, load_feature_spec
from cohort.episodes import RawEpisode, load_episodes, write_episodes
from cohort.matrix import FeatureMatrix, MatrixTransform, SplitIndex, build_matrix, split_holdout
from cohort.summary import CohortSummary, summarize_cohort
from cohort.synth import GeneratorConfig, SyntheticCohort, load_generator_config, synth_cohort

__all__ = [
    "FeatureSpec",
    "load_feature_spec",
    "RawEpisode",
    "load_episodes",
    "write_episodes",
    "FeatureMatrix",
    "MatrixTransform",
    "SplitIndex",
    "build_matrix",
    "split_holdout",
    "CohortSummary",
    "summarize_cohort",
    "GeneratorConfig",
    "SyntheticCohort",
    "load_generator_config",
    "synth_cohort",
]
