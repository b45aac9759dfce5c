"""Atomic artifact writing and provenance stamps."""

import json
import os
import tempfile
from pathlib import Path
from typing import Any, Optional

TOOL_NAME = "riskbench"
TOOL_VERSION = "0.1.0"


def artifact_meta(config_hash: Optional[str]) -> dict:
    """Provenance block embedded in every JSON artifact."""
    return {"tool": TOOL_NAME, "version": TOOL_VERSION, "config_hash": config_hash}


def csv_stamp(config_hash: Optional[str]) -> str:
    """Leading comment line for CSV artifacts."""
    return f"# {TOOL_NAME} {TOOL_VERSION} config={config_hash}\n"


def markdown_stamp(config_hash: Optional[str]) -> str:
    """Leading HTML comment for Markdown artifacts; renders as nothing."""
    return f"<!-- {TOOL_NAME} {TOOL_VERSION} config={config_hash} -->\n"


def atomic_write_bytes(path: Path, data: bytes) -> Path:
    """Write bytes through a temp file in the target directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(data)
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise
    return path


def atomic_write_text(path: Path, text: str) -> Path:
    """Write UTF-8 text with LF line endings atomically."""
    return atomic_write_bytes(path, text.encode("utf-8"))


def dumps_json(payload: Any) -> str:
    """Canonical JSON text used for every JSON artifact."""
    return json.dumps(payload, indent=2, sort_keys=True, allow_nan=False) + "\n"


def atomic_write_json(path: Path, payload: Any, config_hash: Optional[str] = None) -> Path:
    """Write a JSON artifact, stamping provenance when payload is a dict."""
    if isinstance(payload, dict):
        payload = {**payload, "_meta": artifact_meta(config_hash)}
    return atomic_write_text(path, dumps_json(payload))


def read_json(path: Path) -> Any:
    """Read a JSON file."""
    with open(path, "r", encoding="utf-8") as handle:
        return json.load(handle)


def strip_comment_lines(text: str) -> str:
    """Drop leading '#' provenance lines from CSV text."""
    lines = text.splitlines(keepends=True)
    start = 0
    while start < len(lines) and lines[start].startswith("#"):
        start += 1
    return "".join(lines[start:])
