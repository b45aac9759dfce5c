"""Deterministic SVG rendering with matplotlib."""

import io
from typing import Optional

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from utils.artifacts import TOOL_NAME, TOOL_VERSION  # noqa: E402

_SVG_RC = {
    "svg.hashsalt": "riskbench",
    "svg.fonttype": "none",
    "path.simplify": False,
    "font.family": "DejaVu Sans",
    "font.size": 9,
}


def new_figure(width: float = 6.0, height: float = 4.5):
    """Create a figure/axes pair under the deterministic SVG settings."""
    with matplotlib.rc_context(_SVG_RC):
        fig, ax = plt.subplots(figsize=(width, height))
    return fig, ax


def render_svg(fig, config_hash: Optional[str] = None) -> bytes:
    """Serialize a figure to SVG bytes without timestamps, then close it."""
    buffer = io.BytesIO()
    metadata = {
        "Date": None,
        "Creator": f"{TOOL_NAME} {TOOL_VERSION}",
        "Description": f"config={config_hash}",
    }
    with matplotlib.rc_context(_SVG_RC):
        fig.savefig(buffer, format="svg", metadata=metadata)
    plt.close(fig)
    return buffer.getvalue()


def fmt4(value: float) -> str:
    """Fixed four-decimal formatting used in plot labels."""
    return f"{value:.4f}"
