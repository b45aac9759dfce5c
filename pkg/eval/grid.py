"""Cross-validated grid search over learner configurations."""

import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np
import yaml
from sklearn.model_selection import ParameterGrid

from cohort.matrix import FeatureMatrix
from eval.folds import CvPlan, stratified_folds
from eval.roc import auc_score
from models.base import TrainedModel
from models.config import ModelConfig, model_config_from_dict, paper_grid
from models.zoo import fit_model
from utils.errors import ConfigError
from utils.logger import RiskLogger, warn
from utils.parallel import ordered_map
from utils.validators import validate_labels


@dataclass
class Grid:
    """A set of configurations: one or more Cartesian axis maps, each with a ``learner`` axis."""

    param_grid: List[dict]
    name: str = "custom"

    def __post_init__(self):
        if isinstance(self.param_grid, dict):
            self.param_grid = [self.param_grid]
        for axes in self.param_grid:
            if "learner" not in axes:
                raise ConfigError("Every grid block needs a 'learner' axis", field="grid")
            for axis, values in axes.items():
                if not isinstance(values, list) or not values:
                    raise ConfigError(f"Grid axis '{axis}' must be a non-empty list", field="grid")

    @classmethod
    def paper(cls, learner: str) -> "Grid":
        return cls(param_grid=[paper_grid(learner)], name=f"paper-grid:{learner.lower()}")

    @classmethod
    def from_file(cls, path: Path) -> "Grid":
        """Read ``{"grid": [...]}`` (or a bare list/dict of axis maps) from JSON or YAML."""
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
            data = yaml.safe_load(text) if path.suffix.lower() in {".yaml", ".yml"} else json.loads(text)
        except (OSError, json.JSONDecodeError, yaml.YAMLError) as e:
            raise ConfigError(f"Cannot read grid file {path}: {e}", field="grid")
        if isinstance(data, dict) and "grid" in data:
            data = data["grid"]
        return cls(param_grid=data, name=path.name)

    @classmethod
    def resolve(cls, spec: str, base_dir: Path = Path(".")) -> "Grid":
        """``paper-grid:<learner>`` or a path to a grid file."""
        if spec.startswith("paper-grid:"):
            return cls.paper(spec.split(":", 1)[1])
        path = Path(spec)
        if not path.is_absolute():
            path = Path(base_dir) / path
        return cls.from_file(path)

    def configs(self, seed: int = 0) -> List[ModelConfig]:
        """Every configuration in enumeration order."""
        configs = []
        for params in ParameterGrid(self.param_grid):
            params = dict(params)
            params.setdefault("seed", seed)
            configs.append(model_config_from_dict(params))
        return configs

    def __len__(self) -> int:
        return len(ParameterGrid(self.param_grid))


@dataclass
class GridEntry:
    """Cross-validated result of one configuration."""

    index: int
    config: ModelConfig
    fold_aucs: List[float]
    skipped_folds: int = 0

    @property
    def mean(self) -> float:
        return float(np.mean(self.fold_aucs)) if self.fold_aucs else math.nan

    @property
    def sd(self) -> float:
        return float(np.std(self.fold_aucs, ddof=1)) if len(self.fold_aucs) > 1 else 0.0

    def formatted(self) -> str:
        if not self.fold_aucs:
            return "n/a"
        return f"{self.mean:.2f} ± {self.sd:.2f}"

    def sort_key(self):
        mean = self.mean
        return (-mean if not math.isnan(mean) else math.inf, self.sd, self.index)

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "config": self.config.to_dict(),
            "mean_auc": None if math.isnan(self.mean) else self.mean,
            "sd_auc": self.sd,
            "auc": self.formatted(),
            "folds": len(self.fold_aucs),
            "skipped_folds": self.skipped_folds,
            "fold_aucs": self.fold_aucs,
        }


@dataclass
class GridReport:
    """Ranked grid-search results (best first) and the refitted winner."""

    grid_name: str
    plan: CvPlan
    entries: List[GridEntry]
    n_columns: int
    clinical_set: str = "combined"
    winner_model: Optional[TrainedModel] = field(default=None, repr=False)

    @property
    def winner(self) -> GridEntry:
        return self.entries[0]

    def to_dict(self) -> dict:
        return {
            "grid": self.grid_name,
            "cv": self.plan.to_dict(),
            "clinical_set": self.clinical_set,
            "n_columns": self.n_columns,
            "n_configs": len(self.entries),
            "winner": self.winner.to_dict(),
            "ranking": [entry.to_dict() for entry in self.entries],
        }

    def to_markdown(self, top: int = 10) -> str:
        """Best configurations as Markdown rows: learner, clinical set, columns, parameters, AUC."""
        lines = [
            "| Rank | Learner | Clinical set | Columns | Parameters | AUC (mean ± sd) |",
            "|---|---|---|---|---|---|",
        ]
        for rank, entry in enumerate(self.entries[:top], start=1):
            params = ", ".join(
                f"{key}={value}" for key, value in entry.config.to_dict().items() if key not in ("learner", "seed")
            )
            lines.append(
                f"| {rank} | {entry.config.learner} | {self.clinical_set} | {self.n_columns} | {params} | {entry.formatted()} |"
            )
        return "\n".join(lines) + "\n"


def grid_search(
    matrix: FeatureMatrix,
    labels: Optional[Sequence[int]],
    grid: Grid,
    plan: CvPlan,
    threads: int = 1,
    seed: int = 0,
    refit: bool = True,
    clinical_set: str = "combined",
) -> GridReport:
    """Mean held-out AUC of every configuration over all repeats and folds.

    Folds whose training or validation part holds a single class are skipped with a
    warning. Configurations are ranked by mean AUC, then lower sd, then grid order;
    the winner is refit on the whole of ``matrix``.
    """
    start = time.time()
    y = validate_labels(matrix.labels if labels is None else labels)
    configs = grid.configs(seed=seed)
    folds = [
        (r, f, valid)
        for r, repeat in enumerate(stratified_folds(y, plan))
        for f, valid in enumerate(repeat)
    ]

    def evaluate(task):
        index, (repeat, fold, valid) = task
        mask = np.zeros(y.size, dtype=bool)
        mask[valid] = True
        train_rows = np.flatnonzero(~mask)
        if len(set(y[valid].tolist())) < 2 or len(set(y[train_rows].tolist())) < 2:
            return index, repeat, fold, None
        model = fit_model(configs[index], matrix.take(train_rows), y[train_rows])
        scores = model.predict_score(matrix.take(valid))
        return index, repeat, fold, auc_score(scores, y[valid])

    tasks = [(index, fold) for index in range(len(configs)) for fold in folds]
    results = ordered_map(evaluate, tasks, threads)

    entries = [GridEntry(index=i, config=config, fold_aucs=[]) for i, config in enumerate(configs)]
    for index, repeat, fold, auc in results:
        if auc is None:
            entries[index].skipped_folds += 1
            warn("grid_search", "fold skipped: single class", config=index, repeat=repeat, fold=fold)
        else:
            entries[index].fold_aucs.append(auc)
    entries.sort(key=GridEntry.sort_key)

    report = GridReport(
        grid_name=grid.name, plan=plan, entries=entries, n_columns=matrix.n_cols, clinical_set=clinical_set
    )
    if refit:
        report.winner_model = fit_model(report.winner.config, matrix, y, threads=threads)

    RiskLogger.log_operation("grid_search", "success", {
        "grid": grid.name,
        "configs": len(configs),
        "folds": len(folds),
        "winner": report.winner.config.to_dict(),
        "winner_auc": report.winner.formatted(),
    })
    RiskLogger.log_performance("grid_search", (time.time() - start) * 1000, {"tasks": len(tasks)})
    return report
