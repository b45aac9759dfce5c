"""Pipeline stages behind the subcommands.

Every stage reads its inputs from the output directory (or the configured cohort),
writes its artifacts atomically and stamps them with the config hash.
"""

import re
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from baselines.grace import grace_eval, grace_inputs_from_episodes, load_grace_table
from baselines.markers import subgroup_comparison
from cohort.episodes import RawEpisode, load_episodes, write_episodes
from cohort.matrix import FeatureMatrix, MatrixTransform, build_matrix, check_columns, split_matrices
from cohort.spec import FeatureSpec, filter_clinical_sets, load_feature_spec
from cohort.summary import summarize_cohort
from cohort.synth import load_generator_config, synth_cohort, truth_path_for, write_truth
from eval.folds import CvPlan
from eval.grid import Grid, grid_search
from eval.report import compare_reports, evaluate_scores, write_roc_csv, write_roc_svg
from eval.roc import auc_score
from explain.artifacts import dependence_data, explain_model, force_explanation, summary_data
from explain.attribution import Attribution, select_background
from explain.importance import feature_importance, subgroup_importance
from explain.plots import write_dependence_svg, write_force_svg, write_importance_svg, write_summary_svg
from models.base import TrainedModel
from models.config import model_config_from_dict, validate_paper_legal
from models.weights import class_weights
from models.zoo import fit_model
from state.pipeline import STAGES, PipelineState
from utils.artifacts import atomic_write_json, atomic_write_text, markdown_stamp, read_json
from utils.config import RunConfig
from utils.errors import ConfigError, ValidationError
from utils.logger import RiskLogger, warn

DEFAULT_DEPENDENCE_FEATURES = 3


@dataclass
class StageContext:
    """What every stage needs: the config, where artifacts live, and run-wide settings."""

    config: RunConfig
    state: PipelineState
    config_hash: str
    threads: int = 1
    options: Dict[str, object] = field(default_factory=dict)

    @classmethod
    def create(cls, config: RunConfig, config_hash: str, threads: int = 1, **options) -> "StageContext":
        return cls(
            config=config, state=PipelineState.from_config(config), config_hash=config_hash,
            threads=threads, options=options,
        )

    def option(self, name: str, default=None):
        value = self.options.get(name)
        return default if value is None else value


def _slug(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", str(name)).strip("_") or "row"


def feature_spec_for(config: RunConfig) -> List[FeatureSpec]:
    """The feature spec file, or the spec embedded in the generator template."""
    if config.feature_spec:
        return load_feature_spec(config.path("feature_spec"))
    if config.generator:
        return load_generator_config(config.path("generator")).feature_spec()
    raise ConfigError("Run config needs 'feature_spec' or 'generator'", field="feature_spec")


def _episodes(ctx: StageContext) -> Tuple[List[RawEpisode], List[FeatureSpec]]:
    spec = feature_spec_for(ctx.config)
    cohort_path = ctx.state.require("cohort", "synth")
    episodes = load_episodes(cohort_path, spec, long_format=ctx.config.path("long_format"))
    return episodes, spec


def _matrices(ctx: StageContext, clinical_sets: Optional[Sequence[str]] = None):
    """Train and test matrices rebuilt from the recorded split.

    Returns:
        (train matrix, test matrix, train episodes, test episodes)
    """
    episodes, spec = _episodes(ctx)
    split = read_json(ctx.state.require("split", "train"))
    train_rows = np.asarray(split["train_rows"], dtype=np.int64)
    test_rows = np.asarray(split["test_rows"], dtype=np.int64)
    if max(train_rows.max(initial=-1), test_rows.max(initial=-1)) >= len(episodes):
        raise ValidationError("split.json does not match the cohort; re-run train", field="split")
    train_episodes = [episodes[i] for i in train_rows]
    test_episodes = [episodes[i] for i in test_rows]
    if split.get("strict", ctx.config.strict_preprocessing):
        transform = MatrixTransform.fit(train_episodes, filter_clinical_sets(spec, clinical_sets))
        train = build_matrix(train_episodes, spec, transform=transform)
        test = build_matrix(test_episodes, spec, transform=transform)
        check_columns(test.column_names, train.column_names)
    else:
        full = build_matrix(episodes, spec, clinical_sets=clinical_sets)
        train, test = full.take(train_rows), full.take(test_rows)
    return train, test, train_episodes, test_episodes


def _model(ctx: StageContext) -> Tuple[TrainedModel, str]:
    """The tuned winner when tuning ran, else the trained model."""
    if ctx.state.exists("grid_model"):
        return TrainedModel.load(ctx.state.path("grid_model")), "grid_model"
    return TrainedModel.load(ctx.state.require("model", "train")), "model"


def _clinical_sets(model: TrainedModel) -> Optional[List[str]]:
    return model.metadata.get("clinical_sets")


def cmd_synth(ctx: StageContext) -> dict:
    """Generate the synthetic cohort and its ground-truth sidecar."""
    config = ctx.config
    if not config.generator:
        raise ConfigError("synth needs 'generator' in the run config", field="generator")
    template = load_generator_config(config.path("generator"))
    cohort = synth_cohort(template, config.seeds.synth)
    cohort_path = ctx.state.path("cohort")
    write_episodes(
        cohort.episodes, cohort_path, template.feature_spec(),
        long_format=config.path("long_format"), config_hash=ctx.config_hash,
    )
    write_truth(truth_path_for(cohort_path), cohort.truth, ctx.config_hash)
    positives = sum(episode.label for episode in cohort.episodes)
    return {"episodes": len(cohort.episodes), "positives": positives, "cohort": str(cohort_path)}


def cmd_train(ctx: StageContext) -> dict:
    """Summarize the cohort, split it and fit the configured model on the training part."""
    config, state = ctx.config, ctx.state
    episodes, spec = _episodes(ctx)
    summary = summarize_cohort(episodes, spec).to_markdown()
    atomic_write_text(state.path("cohort_summary"), markdown_stamp(ctx.config_hash) + summary)

    model_config = model_config_from_dict({"seed": config.seeds.fit, **config.model})
    overrides = validate_paper_legal(model_config) if ctx.option("paper_grid") else []

    train, test, split = split_matrices(
        episodes, spec, config.test_fraction, config.seeds.split,
        strict=config.strict_preprocessing, clinical_sets=config.clinical_sets,
        stratify=config.stratified_split,
    )
    atomic_write_json(state.path("split"), {
        **split.to_dict(),
        "strict": config.strict_preprocessing,
        "test_fraction": config.test_fraction,
        "train_ids": list(train.episode_ids),
        "test_ids": list(test.episode_ids),
    }, ctx.config_hash)

    weights = class_weights(train.labels)
    model = fit_model(model_config, train, train.labels, weights, threads=ctx.threads)
    model.metadata["clinical_sets"] = list(config.clinical_sets) if config.clinical_sets else None
    model.save(state.path("model"), ctx.config_hash)

    train_auc = auc_score(model.predict_score(train), train.labels)
    atomic_write_json(state.path("training_log"), {
        "model": model_config.to_dict(),
        "paper_grid_overrides": overrides,
        "class_weights": weights.to_dict(),
        "columns": [column.to_dict() for column in train.columns],
        "constant_columns": [name for name, flag in zip(train.column_names, train.constant_mask) if flag],
        "train_rows": train.n_rows,
        "test_rows": test.n_rows,
        "train_auc": train_auc,
        "converged": model.converged,
        "metadata": model.metadata,
    }, ctx.config_hash)
    if not model.converged:
        warn("train", "model did not converge", learner=model.learner)
    return {"learner": model.learner, "train_rows": train.n_rows, "test_rows": test.n_rows, "train_auc": train_auc}


def _grid(ctx: StageContext) -> Grid:
    paper = ctx.option("paper_grid")
    if paper:
        return Grid.paper(paper)
    spec = ctx.option("grid", ctx.config.grid)
    return Grid.resolve(spec, ctx.config.base_dir)


def cmd_tune(ctx: StageContext) -> dict:
    """Cross-validated grid search on the training split; writes the ranked report and the refit winner."""
    config, state = ctx.config, ctx.state
    grid = _grid(ctx)
    configs = grid.configs(seed=config.seeds.fit)
    if ctx.option("paper_grid"):
        for model_config in configs:
            validate_paper_legal(model_config)
    if ctx.option("plan_only"):
        atomic_write_json(state.path("grid_report"), {
            "grid": grid.name,
            "plan_only": True,
            "n_configs": len(configs),
            "configs": [model_config.to_dict() for model_config in configs],
        }, ctx.config_hash)
        return {"grid": grid.name, "n_configs": len(configs), "plan_only": True}

    clinical_sets = ctx.option("clinical_sets") or config.clinical_sets
    train, _, _, _ = _matrices(ctx, clinical_sets)
    plan = CvPlan(k=config.cv.k, repeats=config.cv.repeats, seed=config.seeds.cv, stratified=config.cv.stratified)
    label = "+".join(clinical_sets) if clinical_sets else "combined"
    report = grid_search(
        train, train.labels, grid, plan, threads=ctx.threads, seed=config.seeds.fit, clinical_set=label,
    )
    report.winner_model.metadata["clinical_sets"] = list(clinical_sets) if clinical_sets else None
    report.winner_model.metadata["cv_auc"] = report.winner.fold_aucs
    atomic_write_json(state.path("grid_report"), report.to_dict(), ctx.config_hash)
    atomic_write_text(state.path("grid_markdown"), markdown_stamp(ctx.config_hash) + report.to_markdown())
    report.winner_model.save(state.path("grid_model"), ctx.config_hash)
    return {"grid": grid.name, "n_configs": len(configs), "winner": report.winner.formatted()}


def cmd_evaluate(ctx: StageContext) -> dict:
    """Held-out ROC, AUC with CI and the operating point, compared against GRACE on the same rows."""
    config, state = ctx.config, ctx.state
    n_boot = int(ctx.option("n_boot", config.n_boot))
    model, source = _model(ctx)
    _, test, _, test_episodes = _matrices(ctx, _clinical_sets(model))
    scores = model.predict_score(test)
    name = model.learner
    report = evaluate_scores(
        scores, test.labels, name=name, n_boot=n_boot, seed=config.seeds.bootstrap,
        fold_aucs=model.metadata.get("cv_auc"),
    )
    curves = {name: report.roc}
    payload = {"model_source": source, "test_rows": test.n_rows, "model": None, "grace": None, "grace_rows": 0}

    table = load_grace_table(config.grace_table_path)
    inputs, kept = grace_inputs_from_episodes(test_episodes)
    kept = np.asarray(kept, dtype=np.int64)
    labels_kept = test.labels[kept] if kept.size else np.array([], dtype=np.int64)
    if kept.size and len(set(labels_kept.tolist())) == 2:
        grace = grace_eval(inputs, labels_kept, table, n_boot=n_boot, seed=config.seeds.bootstrap)
        paired = report
        if kept.size < test.n_rows:
            # Paired tests need both scores on the same episodes
            paired = evaluate_scores(scores[kept], labels_kept, name=name, n_boot=n_boot, seed=config.seeds.bootstrap)
        compare_reports(paired, grace)
        curves["GRACE"] = grace.roc
        payload["grace"] = grace.to_dict()
        payload["grace_rows"] = int(kept.size)
    else:
        warn("evaluate", "GRACE baseline skipped: too few scorable test episodes", scorable=int(kept.size))

    payload["model"] = report.to_dict()
    atomic_write_json(state.path("eval_report"), payload, ctx.config_hash)
    write_roc_csv(state.path("roc_csv"), curves, ctx.config_hash)
    write_roc_svg(state.path("roc_svg"), curves, ctx.config_hash)
    return {"model": report.headline(), "grace": payload["grace"]["auc"] if payload["grace"] else None}


def _explained_rows(ctx: StageContext, test: FeatureMatrix) -> FeatureMatrix:
    max_rows = ctx.option("max_rows", ctx.config.explain.max_rows)
    if max_rows is not None and max_rows < test.n_rows:
        return test.take(np.arange(int(max_rows)))
    return test


def cmd_explain(ctx: StageContext) -> dict:
    """Shapley attributions of the test rows and every explanation artifact built from them."""
    config, state = ctx.config, ctx.state
    options = config.explain
    start = time.time()
    model, _ = _model(ctx)
    train, test, _, _ = _matrices(ctx, _clinical_sets(model))
    rows = _explained_rows(ctx, test)
    background, ref = select_background(train, options.background_size, config.seeds.background)
    attribution = explain_model(model, rows, background, threads=ctx.threads, background_ref=ref)

    error = attribution.local_accuracy_error(model, rows)
    if error > attribution.tolerance:
        warn("explain", "attributions do not add up to the model output", error=error, tolerance=attribution.tolerance)
    attribution.write_csv(state.path("attribution"), ctx.config_hash)

    summary = summary_data(attribution, options.top_k)
    summary["local_accuracy_error"] = error
    atomic_write_json(state.path("summary"), summary, ctx.config_hash)
    write_summary_svg(state.path("summary_svg"), summary, ctx.config_hash, seed=config.seeds.background)

    ranking = feature_importance(attribution)
    features = options.dependence_features or ranking.top(DEFAULT_DEPENDENCE_FEATURES)
    dependence = []
    for feature in features:
        data = dependence_data(
            attribution, feature, model=model, matrix=rows, background=background, seed=config.seeds.background,
        )
        write_dependence_svg(state.extra_path(f"dependence_{_slug(feature)}.svg"), data, ctx.config_hash)
        dependence.append(data)
    atomic_write_json(state.path("dependence"), {"features": dependence}, ctx.config_hash)

    if options.force_rows:
        positions = {episode_id: i for i, episode_id in enumerate(rows.episode_ids)}
        unknown = [episode_id for episode_id in options.force_rows if episode_id not in positions]
        if unknown:
            raise ValidationError(f"force rows not among the explained episodes: {unknown}", field="explain.force_rows")
        force_rows = [positions[episode_id] for episode_id in options.force_rows]
    else:
        force_rows = [int(np.argmax(attribution.outputs()))]
    explanations = []
    for i in force_rows:
        explanation = force_explanation(model, rows.take([i]), background)
        write_force_svg(state.extra_path(f"force_{_slug(explanation.row_id)}.svg"), explanation, ctx.config_hash)
        explanations.append(explanation.to_dict())
    atomic_write_json(state.path("force"), {"explanations": explanations}, ctx.config_hash)

    subgroups = subgroup_importance(attribution, config.subgroups.grouping, config.subgroups.age_edges)
    atomic_write_json(state.path("importance"), {
        "overall": ranking.to_dict(),
        "subgroups": subgroups.to_dict(options.top_k),
    }, ctx.config_hash)
    write_importance_svg(state.extra_path("importance.svg"), ranking, ctx.config_hash, options.top_k)
    for group, group_ranking in subgroups.rankings.items():
        write_importance_svg(
            state.extra_path(f"importance_{_slug(group)}.svg"), group_ranking, ctx.config_hash, options.top_k,
        )

    RiskLogger.log_performance("explain", (time.time() - start) * 1000, {"rows": rows.n_rows, "method": attribution.method})
    return {"method": attribution.method, "rows": rows.n_rows, "local_accuracy_error": error}


def cmd_compare(ctx: StageContext) -> dict:
    """Mean |SHAP| against Cox significance for the top markers, per sex."""
    config, state = ctx.config, ctx.state
    model, _ = _model(ctx)
    _, test, _, _ = _matrices(ctx, _clinical_sets(model))
    summary = read_json(state.require("summary", "explain"))
    attribution = Attribution.read_csv(state.require("attribution", "explain"), test, method=summary.get("method", "exact"))
    positions = {episode_id: i for i, episode_id in enumerate(test.episode_ids)}
    matrix = test.take([positions[episode_id] for episode_id in attribution.row_ids])
    comparison = subgroup_comparison(
        attribution, matrix,
        markers=config.compare.markers or None,
        n_markers=config.compare.n_markers,
        diagnosis=config.compare.diagnosis,
        threads=ctx.threads,
    )
    comparison.write(state.path("markers"), state.path("markers_markdown"), ctx.config_hash)
    return {"markers": len(comparison.markers), "groups": comparison.groups}


STAGE_COMMANDS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "tune": cmd_tune,
    "evaluate": cmd_evaluate,
    "explain": cmd_explain,
    "compare": cmd_compare,
}


def cmd_run(ctx: StageContext) -> dict:
    """Every enabled stage in order; synth is skipped when the cohort comes from a file."""
    results = {}
    for stage in STAGES:
        if not ctx.config.stages.get(stage, True):
            RiskLogger.log_operation(stage, "skipped", {"reason": "disabled in config"})
            continue
        if stage == "synth" and not ctx.config.generator:
            RiskLogger.log_operation(stage, "skipped", {"reason": "no generator configured"})
            continue
        results[stage] = run_stage(stage, ctx)
    missing = ctx.state.missing()
    if missing:
        warn("run", "core artifacts missing after the run", artifacts=missing)
    return results


def run_stage(stage: str, ctx: StageContext) -> dict:
    """Run one stage with start/finish logging."""
    start = time.time()
    RiskLogger.log_operation(stage, "started", {"output_dir": str(ctx.state.output_dir)})
    result = STAGE_COMMANDS[stage](ctx)
    RiskLogger.log_operation(stage, "success", result)
    RiskLogger.log_performance(stage, (time.time() - start) * 1000)
    return result


def run_command(command: str, ctx: StageContext) -> dict:
    if command == "run":
        return cmd_run(ctx)
    if command not in STAGE_COMMANDS:
        raise ValidationError(f"Unknown command '{command}'", field="command")
    return run_stage(command, ctx)
