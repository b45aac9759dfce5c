"""Episode records and the episode CSV contract."""

import io
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from cohort.spec import DYNAMIC_STATS, SEX_LEVELS, FeatureSpec
from utils.artifacts import atomic_write_text, csv_stamp, strip_comment_lines
from utils.errors import CohortFormatError, DuplicateEpisodeError
from utils.logger import RiskLogger, warn

CORE_COLUMNS = ("episode_id", "sex", "age", "los_days", "label")
SURVIVAL_COLUMN = "survival_days"
LONG_COLUMNS = ("episode_id", "feature", "timestamp", "value")


@dataclass
class RawEpisode:
    """One hospital episode as read from (or written to) a cohort file."""

    episode_id: str
    sex: str
    age: float
    length_of_stay: float
    label: int
    survival_time: Optional[float] = None
    static_values: Dict[str, Any] = field(default_factory=dict)
    # feature -> [(timestamp, value), ...] with non-decreasing timestamps
    dynamic_values: Dict[str, List[Tuple[float, float]]] = field(default_factory=dict)
    # feature -> {"min"|"max"|"mean": value} when the file ships pre-aggregated columns
    dynamic_aggregates: Dict[str, Dict[str, float]] = field(default_factory=dict)
    # column -> numeric cell text as read, written back while the parsed value is unchanged
    source_text: Dict[str, str] = field(default_factory=dict, repr=False, compare=False)

    def core_value(self, name: str):
        """Value of a core feature (age, los_days, sex)."""
        if name == "age":
            return self.age
        if name == "los_days":
            return self.length_of_stay
        if name == "sex":
            return self.sex
        raise KeyError(name)

    def aggregate(self, feature: str, stat: str) -> Optional[float]:
        """min/max/mean of a dynamic feature, from its sequence or shipped aggregate."""
        sequence = self.dynamic_values.get(feature)
        if sequence:
            values = np.array([value for _, value in sequence], dtype=float)
            if stat == "min":
                return float(values.min())
            if stat == "max":
                return float(values.max())
            return float(values.mean())
        return self.dynamic_aggregates.get(feature, {}).get(stat)


def format_number(value: float) -> str:
    """Canonical text of a number in cohort files."""
    value = float(value)
    if value.is_integer() and abs(value) < 1e15:
        return str(int(value))
    return repr(value)


def number_cell(episode: RawEpisode, column: str, value: float) -> str:
    """Cell text for a numeric value, keeping the loaded spelling when it still parses to ``value``."""
    text = episode.source_text.get(column)
    if text is not None and float(text) == float(value):
        return text
    return format_number(value)


def _parse_number(text: str, line: int, column: str, positive: bool = False) -> float:
    try:
        value = float(text)
    except ValueError:
        raise CohortFormatError(f"Malformed number {text!r}", line=line, column=column)
    if not math.isfinite(value):
        raise CohortFormatError(f"Non-finite number {text!r}", line=line, column=column)
    if positive and value <= 0:
        raise CohortFormatError(f"Expected a positive number, got {text!r}", line=line, column=column)
    return value


def _read_csv_text(path: Path) -> Tuple[pd.DataFrame, int]:
    """Read a contract CSV as strings; returns the frame and the number of comment lines."""
    try:
        raw = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise CohortFormatError(f"Cannot read cohort file {path}: {e}")
    body = strip_comment_lines(raw)
    n_comments = raw.count("\n", 0, len(raw) - len(body))
    if not body.strip():
        raise CohortFormatError(f"Cohort file {path} has no header", line=n_comments + 1)
    try:
        frame = pd.read_csv(io.StringIO(body), dtype=str, keep_default_na=False, skip_blank_lines=True)
    except pd.errors.ParserError as e:
        match = re.search(r"line (\d+)", str(e))
        line = int(match.group(1)) + n_comments if match else None
        raise CohortFormatError(f"Malformed row: {e}", line=line)
    # Short rows come back as NaN cells
    short = frame.isna().any(axis=1).to_numpy()
    if short.any():
        row = int(np.flatnonzero(short)[0])
        raise CohortFormatError("Row has too few fields", line=n_comments + 2 + row)
    return frame, n_comments


def load_episodes(
    path: Path,
    spec: Sequence[FeatureSpec],
    long_format: Optional[Path] = None,
) -> List[RawEpisode]:
    """Read an episode CSV (and optional long-format companion) into RawEpisodes.

    Args:
        path: Wide episode CSV, one row per episode
        spec: Feature spec the columns are interpreted against
        long_format: Optional ``episode_id,feature,timestamp,value`` file with dynamic sequences

    Returns:
        Episodes in file order

    Raises:
        CohortFormatError: Malformed row, missing core column, bad value (names line and column)
        DuplicateEpisodeError: The same episode_id appears twice
    """
    frame, n_comments = _read_csv_text(path)
    header = list(frame.columns)
    for column in CORE_COLUMNS:
        if column not in header:
            raise CohortFormatError(f"Missing required column '{column}'", line=n_comments + 1, column=column)

    by_name = {feature.name: feature for feature in spec}
    expected = set(CORE_COLUMNS) | {SURVIVAL_COLUMN}
    for feature in spec:
        expected.update(feature.csv_columns())
    unknown = [column for column in header if column not in expected]
    if unknown:
        warn("load_episodes", "unknown columns ignored", columns=unknown, path=str(path))

    episodes: List[RawEpisode] = []
    seen = {}
    for row_idx, record in enumerate(frame.to_dict(orient="records")):
        line = n_comments + 2 + row_idx
        episode_id = record["episode_id"].strip()
        if not episode_id:
            raise CohortFormatError("Empty episode_id", line=line, column="episode_id")
        if episode_id in seen:
            raise DuplicateEpisodeError(
                f"Duplicate episode_id '{episode_id}' (first seen on line {seen[episode_id]})",
                line=line, column="episode_id"
            )
        seen[episode_id] = line

        sex = record["sex"].strip()
        if sex not in SEX_LEVELS:
            raise CohortFormatError(f"sex must be female or male, got {sex!r}", line=line, column="sex")
        label_text = record["label"].strip()
        if label_text not in ("0", "1"):
            raise CohortFormatError(f"label must be 0 or 1, got {label_text!r}", line=line, column="label")
        source_text = {"age": record["age"].strip(), "los_days": record["los_days"].strip()}
        survival = None
        if record.get(SURVIVAL_COLUMN, "").strip():
            survival = _parse_number(record[SURVIVAL_COLUMN], line, SURVIVAL_COLUMN, positive=True)
            source_text[SURVIVAL_COLUMN] = record[SURVIVAL_COLUMN].strip()

        episode = RawEpisode(
            episode_id=episode_id,
            sex=sex,
            age=_parse_number(record["age"], line, "age", positive=True),
            length_of_stay=_parse_number(record["los_days"], line, "los_days", positive=True),
            label=int(label_text),
            survival_time=survival,
            source_text=source_text,
        )

        for feature in spec:
            if feature.is_core:
                continue
            if feature.kind == "dynamic-numeric":
                aggregates = {}
                for stat in DYNAMIC_STATS:
                    column = f"{feature.name}@{stat}"
                    text = record.get(column, "").strip()
                    if text:
                        aggregates[stat] = _parse_number(text, line, column)
                        source_text[column] = text
                if aggregates:
                    episode.dynamic_aggregates[feature.name] = aggregates
                continue
            text = record.get(feature.name, "").strip()
            if not text:
                continue
            if feature.kind == "static-categorical":
                if feature.levels and text not in feature.levels:
                    raise CohortFormatError(
                        f"Undeclared level {text!r} (declared: {', '.join(feature.levels)})",
                        line=line, column=feature.name
                    )
                episode.static_values[feature.name] = text
            elif feature.kind == "binary-flag":
                if text not in ("0", "1"):
                    raise CohortFormatError(f"Binary flag must be 0 or 1, got {text!r}", line=line, column=feature.name)
                episode.static_values[feature.name] = int(text)
            else:
                episode.static_values[feature.name] = _parse_number(text, line, feature.name)
                source_text[feature.name] = text
        episodes.append(episode)

    if long_format is not None:
        _attach_sequences(episodes, by_name, Path(long_format))

    if not episodes:
        warn("load_episodes", "empty cohort", path=str(path))
    RiskLogger.log_operation("load_episodes", "success", {
        "path": str(path),
        "episodes": len(episodes),
        "positives": sum(episode.label for episode in episodes),
    })
    return episodes


def _attach_sequences(episodes: List[RawEpisode], by_name: Dict[str, FeatureSpec], path: Path):
    """Fill dynamic_values from a long-format companion file."""
    frame, n_comments = _read_csv_text(path)
    for column in LONG_COLUMNS:
        if column not in frame.columns:
            raise CohortFormatError(f"Missing required column '{column}'", line=n_comments + 1, column=column)
    index = {episode.episode_id: episode for episode in episodes}
    for row_idx, record in enumerate(frame.to_dict(orient="records")):
        line = n_comments + 2 + row_idx
        episode = index.get(record["episode_id"].strip())
        if episode is None:
            raise CohortFormatError(f"Unknown episode_id {record['episode_id']!r}", line=line, column="episode_id")
        name = record["feature"].strip()
        feature = by_name.get(name)
        if feature is None or feature.kind != "dynamic-numeric":
            raise CohortFormatError(f"'{name}' is not a declared dynamic-numeric feature", line=line, column="feature")
        if not record["value"].strip():
            continue
        timestamp = _parse_number(record["timestamp"], line, "timestamp")
        value = _parse_number(record["value"], line, "value")
        sequence = episode.dynamic_values.setdefault(name, [])
        if sequence and timestamp < sequence[-1][0]:
            raise CohortFormatError(
                f"Timestamps for '{name}' of episode '{episode.episode_id}' decrease",
                line=line, column="timestamp"
            )
        sequence.append((timestamp, value))


def write_episodes(
    episodes: Sequence[RawEpisode],
    path: Path,
    spec: Sequence[FeatureSpec],
    long_format: Optional[Path] = None,
    config_hash: Optional[str] = None,
) -> Path:
    """Write episodes in the wide CSV form.

    Numeric cells loaded from a file keep their original spelling (``2.50`` stays
    ``2.50``) unless the value changed; everything else uses ``format_number``.

    Dynamic features are written as pre-aggregated min/max/mean columns; when
    ``long_format`` is given the raw sequences are written there as well.
    A provenance comment line is prepended when ``config_hash`` is given.
    """
    has_survival = any(episode.survival_time is not None for episode in episodes)
    header = list(CORE_COLUMNS) + ([SURVIVAL_COLUMN] if has_survival else [])
    for feature in spec:
        header.extend(feature.csv_columns())

    lines = [",".join(header)]
    for episode in episodes:
        cells = [
            episode.episode_id,
            episode.sex,
            number_cell(episode, "age", episode.age),
            number_cell(episode, "los_days", episode.length_of_stay),
            str(int(episode.label)),
        ]
        if has_survival:
            survival = episode.survival_time
            cells.append("" if survival is None else number_cell(episode, SURVIVAL_COLUMN, survival))
        for feature in spec:
            if feature.is_core:
                continue
            if feature.kind == "dynamic-numeric":
                for stat in DYNAMIC_STATS:
                    value = episode.aggregate(feature.name, stat)
                    cells.append("" if value is None else number_cell(episode, f"{feature.name}@{stat}", value))
                continue
            value = episode.static_values.get(feature.name)
            if value is None:
                cells.append("")
            elif feature.kind == "static-categorical":
                cells.append(str(value))
            elif feature.kind == "binary-flag":
                cells.append(str(int(value)))
            else:
                cells.append(number_cell(episode, feature.name, value))
        lines.append(",".join(cells))

    text = "\n".join(lines) + "\n"
    if config_hash is not None:
        text = csv_stamp(config_hash) + text
    atomic_write_text(path, text)

    if long_format is not None:
        long_lines = [",".join(LONG_COLUMNS)]
        for episode in episodes:
            for feature in spec:
                for timestamp, value in episode.dynamic_values.get(feature.name, []):
                    long_lines.append(",".join([
                        episode.episode_id, feature.name, format_number(timestamp), format_number(value),
                    ]))
        long_text = "\n".join(long_lines) + "\n"
        if config_hash is not None:
            long_text = csv_stamp(config_hash) + long_text
        atomic_write_text(long_format, long_text)
    return Path(path)
