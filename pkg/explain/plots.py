"""SVG renderings of the explanation artifacts."""

from pathlib import Path
from typing import Optional

import numpy as np
from matplotlib import colormaps

from explain.artifacts import Explanation
from explain.importance import ImportanceRanking
from utils.artifacts import atomic_write_bytes
from utils.plotting import fmt4, new_figure, render_svg
from utils.seeding import EXPLAIN, make_rng

_CMAP = colormaps["coolwarm"]
_PUSH_UP = "#d62728"
_PUSH_DOWN = "#1f77b4"


def write_summary_svg(path: Path, summary: dict, config_hash: Optional[str] = None, seed: int = 0) -> Path:
    """Beeswarm-style summary: one row per feature, most important on top.

    Vertical jitter is drawn from the seeded explain stream so the file is reproducible.
    """
    features = summary["features"]
    fig, ax = new_figure(6.5, max(2.5, 0.35 * len(features) + 1.2))
    rng = make_rng(seed, EXPLAIN)
    for position, feature in enumerate(reversed(features)):
        phi = np.array([point["phi"] for point in feature["points"]])
        color = np.array([point["color"] for point in feature["points"]])
        jitter = rng.uniform(-0.3, 0.3, size=phi.size)
        ax.scatter(phi, position + jitter, c=_CMAP(color), s=6, linewidths=0)
    ax.axvline(0.0, color="0.6", linewidth=0.8)
    ax.set_yticks(range(len(features)))
    ax.set_yticklabels([feature["column"] for feature in reversed(features)])
    ax.set_xlabel("Shapley value (impact on log-odds)")
    ax.set_title(f"base value={fmt4(summary['base_value'])}, feature value: low=blue high=red")
    fig.tight_layout()
    return atomic_write_bytes(path, render_svg(fig, config_hash))


def write_dependence_svg(path: Path, dependence: dict, config_hash: Optional[str] = None) -> Path:
    """Raw feature value against its Shapley value, colored by the interacting feature."""
    points = dependence["points"]
    x = np.array([point["x"] for point in points])
    phi = np.array([point["phi"] for point in points])
    fig, ax = new_figure(5.5, 4.0)
    if dependence["color_feature"] is not None and points:
        color = np.array([point["color"] for point in points], dtype=float)
        low, high = float(np.min(color)), float(np.max(color))
        scaled = np.full(color.shape, 0.5) if high <= low else (color - low) / (high - low)
        ax.scatter(x, phi, c=_CMAP(scaled), s=8, linewidths=0)
        ax.set_title(
            f"color: {dependence['color_feature']} "
            f"({fmt4(low)} to {fmt4(high)}, {dependence['color_method']})"
        )
    else:
        ax.scatter(x, phi, color="0.3", s=8, linewidths=0)
    ax.axhline(0.0, color="0.6", linewidth=0.8)
    ax.set_xlabel(dependence["feature"])
    ax.set_ylabel(f"Shapley value for {dependence['feature']}")
    fig.tight_layout()
    return atomic_write_bytes(path, render_svg(fig, config_hash))


def write_force_svg(path: Path, explanation: Explanation, config_hash: Optional[str] = None, max_labels: int = 6) -> Path:
    """Contributions as arrows from the base value to the output value.

    Positive contributions push right toward higher risk, negative ones left.
    """
    fig, ax = new_figure(8.0, 2.4)
    positive = [c for c in explanation.contributions if c.phi > 0]
    negative = [c for c in explanation.contributions if c.phi < 0]

    # Positives stack leftward from the output, negatives rightward from it
    right = explanation.output_value
    for rank, contribution in enumerate(positive):
        left = right - contribution.phi
        ax.barh(0, contribution.phi, left=left, height=0.4, color=_PUSH_UP, edgecolor="white", linewidth=0.5)
        if rank < max_labels:
            ax.text((left + right) / 2, -0.35, f"{contribution.column}={fmt4(contribution.value)}",
                    ha="center", va="top", fontsize=7, rotation=30)
        right = left
    left = explanation.output_value
    for rank, contribution in enumerate(negative):
        width = -contribution.phi
        ax.barh(0, width, left=left, height=0.4, color=_PUSH_DOWN, edgecolor="white", linewidth=0.5)
        if rank < max_labels:
            ax.text(left + width / 2, 0.35, f"{contribution.column}={fmt4(contribution.value)}",
                    ha="center", va="bottom", fontsize=7, rotation=30)
        left += width

    ax.axvline(explanation.base_value, color="0.4", linestyle="--", linewidth=0.8)
    ax.axvline(explanation.output_value, color="black", linewidth=1.0)
    ax.set_yticks([])
    ax.set_ylim(-1.2, 1.2)
    ax.set_xlabel("log-odds")
    ax.set_title(
        f"{explanation.row_id or 'row'}: base value={fmt4(explanation.base_value)}, "
        f"output value={fmt4(explanation.output_value)}"
    )
    fig.tight_layout()
    return atomic_write_bytes(path, render_svg(fig, config_hash))


def write_importance_svg(
    path: Path,
    ranking: ImportanceRanking,
    config_hash: Optional[str] = None,
    top_k: Optional[int] = None,
) -> Path:
    """Horizontal bars of mean |phi|, largest on top."""
    ranked = ranking.ranked()[:top_k]
    fig, ax = new_figure(6.0, max(2.5, 0.3 * len(ranked) + 1.2))
    names = [name for name, _ in reversed(ranked)]
    values = [value for _, value in reversed(ranked)]
    ax.barh(range(len(ranked)), values, color=_PUSH_UP)
    ax.set_yticks(range(len(ranked)))
    ax.set_yticklabels(names)
    ax.set_xlabel("mean |Shapley value|")
    title = f"{ranking.group} (n={ranking.n_rows})" if ranking.group else f"n={ranking.n_rows}"
    ax.set_title(title)
    fig.tight_layout()
    return atomic_write_bytes(path, render_svg(fig, config_hash))
