"""Pipeline state: which stage artifacts exist in an output directory."""

from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from cohort.synth import truth_path_for
from utils.config import RunConfig
from utils.errors import MissingArtifactError

# artifact -> (file name under the output directory, stage that writes it)
ARTIFACTS = {
    "cohort": ("cohort.csv", "synth"),
    "truth": ("cohort.truth.json", "synth"),
    "cohort_summary": ("cohort_summary.md", "train"),
    "split": ("split.json", "train"),
    "model": ("model.json", "train"),
    "training_log": ("training_log.json", "train"),
    "grid_report": ("grid_report.json", "tune"),
    "grid_markdown": ("grid_report.md", "tune"),
    "grid_model": ("grid_model.json", "tune"),
    "eval_report": ("eval_report.json", "evaluate"),
    "roc_csv": ("roc.csv", "evaluate"),
    "roc_svg": ("roc.svg", "evaluate"),
    "attribution": ("attribution.csv", "explain"),
    "summary": ("summary.json", "explain"),
    "summary_svg": ("summary.svg", "explain"),
    "dependence": ("dependence.json", "explain"),
    "force": ("force.json", "explain"),
    "importance": ("importance.json", "explain"),
    "markers": ("markers.csv", "compare"),
    "markers_markdown": ("markers.md", "compare"),
}

# The files a complete run always leaves behind
CORE_ARTIFACTS = (
    "cohort", "model", "grid_report", "eval_report", "roc_svg",
    "attribution", "summary", "force", "markers",
)

STAGES = ("synth", "train", "tune", "evaluate", "explain", "compare")


@dataclass
class PipelineState:
    """Artifact locations of one run, and checks that a stage's inputs exist."""

    output_dir: Path
    cohort_path: Optional[Path] = None

    @classmethod
    def from_config(cls, config: RunConfig) -> "PipelineState":
        return cls(output_dir=config.output_path, cohort_path=config.cohort_path)

    def path(self, artifact: str) -> Path:
        if artifact == "cohort" and self.cohort_path is not None:
            return Path(self.cohort_path)
        if artifact == "truth" and self.cohort_path is not None:
            return truth_path_for(self.cohort_path)
        try:
            name, _ = ARTIFACTS[artifact]
        except KeyError:
            raise KeyError(f"Unknown pipeline artifact '{artifact}'")
        return Path(self.output_dir) / name

    def extra_path(self, name: str) -> Path:
        """Location of a per-feature or per-group file (e.g. ``dependence_age.svg``)."""
        return Path(self.output_dir) / name

    def exists(self, artifact: str) -> bool:
        return self.path(artifact).exists()

    def require(self, artifact: str, stage: Optional[str] = None) -> Path:
        """Path of an artifact that must already exist.

        Raises:
            MissingArtifactError: Names the artifact and the stage that produces it
        """
        target = self.path(artifact)
        if not target.exists():
            raise MissingArtifactError(f"{artifact} ({target})", stage=stage or ARTIFACTS[artifact][1])
        return target

    def missing(self, artifacts: Sequence[str] = CORE_ARTIFACTS) -> List[str]:
        return [artifact for artifact in artifacts if not self.exists(artifact)]

    def status(self) -> Dict[str, Dict[str, object]]:
        """Every known artifact with its stage and presence."""
        return {
            artifact: {"stage": stage, "path": str(self.path(artifact)), "present": self.exists(artifact)}
            for artifact, (_, stage) in ARTIFACTS.items()
        }
