"""Configuration utilities for riskbench."""

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, List, Optional

import yaml
from dotenv import load_dotenv

from utils.errors import ConfigError
from utils.validators import validate_fraction, validate_seed

PROJECT_ROOT = Path(__file__).resolve().parent.parent
DEFAULT_GRACE_TABLE = PROJECT_ROOT / "config" / "grace_points.json"


def load_config() -> None:
    """Load environment variables from .env file."""
    load_dotenv()


def get_env(key: str, default: Optional[str] = None, required: bool = False) -> Optional[str]:
    """Get environment variable with optional default and required validation.

    Args:
        key: Environment variable name
        default: Default value if not found
        required: If True, raises ConfigError when not found

    Returns:
        The environment variable value or default

    Raises:
        ConfigError: If required=True and variable is not set
    """
    value = os.getenv(key, default)
    if required and value is None:
        raise ConfigError(f"Required environment variable '{key}' is not set", field=key)
    return value


def resolve_threads(cli_value: Optional[int] = None, config_value: Optional[int] = None) -> int:
    """Worker count: --threads, then the run config, then RISKBENCH_THREADS, then 1."""
    for candidate in (cli_value, config_value, get_env("RISKBENCH_THREADS")):
        if candidate is None or candidate == "":
            continue
        try:
            threads = int(candidate)
        except (TypeError, ValueError):
            raise ConfigError(f"threads must be an integer, got {candidate!r}", field="threads")
        if threads < 1:
            raise ConfigError(f"threads must be >= 1, got {threads}", field="threads")
        return threads
    return 1


@dataclass
class SeedConfig:
    """Seeds of the named random sub-streams."""
    synth: int = 7
    split: int = 11
    fit: int = 13
    cv: int = 17
    bootstrap: int = 19
    background: int = 23


@dataclass
class CvConfig:
    """Repeated stratified k-fold plan."""
    k: int = 5
    repeats: int = 10
    stratified: bool = True


@dataclass
class SubgroupConfig:
    """Subgroup definition for marker ranking."""
    grouping: str = "sex"  # sex, age-bins, sex-age
    age_edges: List[float] = field(default_factory=lambda: [50, 60, 70, 80])


@dataclass
class ExplainConfig:
    """Attribution options."""
    background_size: int = 100
    top_k: int = 10
    max_rows: Optional[int] = None
    dependence_features: List[str] = field(default_factory=list)
    force_rows: List[str] = field(default_factory=list)


@dataclass
class CompareConfig:
    """SHAP versus Cox marker comparison options."""
    markers: List[str] = field(default_factory=list)
    n_markers: int = 10
    diagnosis: str = "cohort"


@dataclass
class RunConfig:
    """Everything one pipeline run needs; hashed into every artifact."""

    output_dir: str
    cohort: Optional[str] = None
    long_format: Optional[str] = None
    feature_spec: Optional[str] = None
    generator: Optional[str] = None
    grace_table: Optional[str] = None
    grid: str = "paper-grid:gbt"
    model: Dict[str, Any] = field(default_factory=lambda: {"learner": "GBT"})
    test_fraction: float = 0.2
    strict_preprocessing: bool = False
    stratified_split: bool = True
    clinical_sets: Optional[List[str]] = None
    threads: Optional[int] = None
    n_boot: int = 1000
    stages: Dict[str, bool] = field(default_factory=lambda: {
        "synth": True, "train": True, "tune": True, "evaluate": True, "explain": True, "compare": True,
    })
    seeds: SeedConfig = field(default_factory=SeedConfig)
    cv: CvConfig = field(default_factory=CvConfig)
    subgroups: SubgroupConfig = field(default_factory=SubgroupConfig)
    explain: ExplainConfig = field(default_factory=ExplainConfig)
    compare: CompareConfig = field(default_factory=CompareConfig)

    # Directory of the config file; relative paths resolve against it
    base_dir: str = field(default=".", repr=False, compare=False)

    def path(self, name: str) -> Optional[Path]:
        """Resolve a path-valued field against the config file's directory."""
        value = getattr(self, name)
        if value is None:
            return None
        candidate = Path(value)
        if not candidate.is_absolute():
            candidate = Path(self.base_dir) / candidate
        return candidate

    @property
    def output_path(self) -> Path:
        return self.path("output_dir")

    @property
    def cohort_path(self) -> Path:
        return self.path("cohort") or self.output_path / "cohort.csv"

    @property
    def grace_table_path(self) -> Path:
        return self.path("grace_table") or DEFAULT_GRACE_TABLE

    def to_dict(self) -> dict:
        """Canonical dict form (base_dir excluded)."""
        data = asdict(self)
        data.pop("base_dir", None)
        return data


_NESTED = {
    "seeds": SeedConfig,
    "cv": CvConfig,
    "subgroups": SubgroupConfig,
    "explain": ExplainConfig,
    "compare": CompareConfig,
}


def _build(cls, data: dict, section: str):
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"Unknown key(s) in {section}: {', '.join(unknown)}", field=section)
    return cls(**data)


def run_config_from_dict(data: dict, base_dir: str = ".") -> RunConfig:
    """Build a RunConfig from a parsed JSON/YAML mapping.

    Raises:
        ConfigError: On unknown keys or a missing output_dir
    """
    if not isinstance(data, dict):
        raise ConfigError("Run config must be a mapping")
    data = dict(data)
    if "output_dir" not in data:
        raise ConfigError("Run config is missing 'output_dir'", field="output_dir")
    for key, cls in _NESTED.items():
        if key in data:
            section = data[key] or {}
            if not isinstance(section, dict):
                raise ConfigError(f"'{key}' must be a mapping", field=key)
            data[key] = _build(cls, section, key)
    config = _build(RunConfig, data, "run config")
    config.base_dir = str(base_dir)
    return config


def load_run_config(path: Path) -> RunConfig:
    """Read a run config from JSON or YAML.

    Args:
        path: Config file location

    Returns:
        Parsed RunConfig with paths resolved against the file's directory
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"Run config not found: {path}", field="config")
    text = path.read_text(encoding="utf-8")
    try:
        if path.suffix.lower() in {".yaml", ".yml"}:
            data = yaml.safe_load(text)
        else:
            data = json.loads(text)
    except (yaml.YAMLError, json.JSONDecodeError) as e:
        raise ConfigError(f"Cannot parse run config {path}: {e}", field="config")
    return run_config_from_dict(data, base_dir=str(path.parent))


def validate_run_config(config: RunConfig, require: tuple = ()) -> RunConfig:
    """Validate a run config before any stage executes.

    Args:
        config: Run configuration
        require: Path fields that must point at existing files

    Raises:
        ConfigError: If a referenced file is missing, the output dir is not writable,
            or a seed is not an explicit integer
    """
    for name in require:
        target = config.path(name)
        if target is None:
            raise ConfigError(f"Run config must set '{name}'", field=name)
        if not target.exists():
            raise ConfigError(f"Referenced file does not exist: {name}={target}", field=name)

    out = config.output_path
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise ConfigError(f"Cannot create output directory {out}: {e}", field="output_dir")
    if not os.access(out, os.W_OK):
        raise ConfigError(f"Output directory is not writable: {out}", field="output_dir")

    for name, value in asdict(config.seeds).items():
        try:
            validate_seed(value, field=f"seeds.{name}")
        except Exception as e:
            raise ConfigError(str(e), field=f"seeds.{name}")
    try:
        validate_fraction(config.test_fraction, "test_fraction")
    except Exception as e:
        raise ConfigError(str(e), field="test_fraction")
    if config.cv.k < 2 or config.cv.repeats < 1:
        raise ConfigError("cv.k must be >= 2 and cv.repeats >= 1", field="cv")
    if config.subgroups.grouping not in {"sex", "age-bins", "sex-age"}:
        raise ConfigError(
            f"subgroups.grouping must be sex, age-bins or sex-age, got {config.subgroups.grouping!r}",
            field="subgroups.grouping"
        )
    return config


def config_hash(config: RunConfig) -> str:
    """Short SHA-256 of the canonical config JSON."""
    canonical = json.dumps(config.to_dict(), sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]
