"""Random forest with class-weighted Gini splits."""

import math
import time
from typing import Optional, Sequence

import numpy as np
from sklearn.metrics import roc_auc_score

from models.base import TrainedModel, as_design
from models.config import ModelConfig
from models.tree import Tree, TreeBuilder, split_candidates
from models.weights import ClassWeights, class_weights
from utils.logger import RiskLogger
from utils.parallel import ordered_map
from utils.seeding import FIT, child_seed, make_rng
from utils.validators import validate_labels

# Leaf frequencies are clipped to [LEAF_CLIP, 1 - LEAF_CLIP] before taking log-odds
LEAF_CLIP = 1e-3


def leaf_log_odds(positive: float, total: float) -> float:
    """Log-odds of the weighted class-1 frequency in a node (0 for an empty node)."""
    if total <= 0:
        return 0.0
    frequency = min(max(positive / total, LEAF_CLIP), 1.0 - LEAF_CLIP)
    return math.log(frequency / (1.0 - frequency))


def _weighted_gini(total: np.ndarray, positive: np.ndarray) -> np.ndarray:
    """Gini impurity times node weight: W - (W1^2 + W0^2) / W."""
    negative = total - positive
    with np.errstate(divide="ignore", invalid="ignore"):
        value = total - (positive ** 2 + negative ** 2) / total
    return np.where(total > 0, value, 0.0)


class _ForestTreeGrower:
    """Grows one bootstrap tree."""

    def __init__(self, X, y, weight, active, max_features, max_depth, rng):
        self.X = X
        self.y = y
        self.weight = weight
        self.active = active
        self.max_features = max_features
        self.max_depth = max_depth
        self.rng = rng
        self.builder = TreeBuilder()

    def grow(self, rows: np.ndarray) -> Tree:
        self._node(rows, 0)
        return self.builder.build()

    def _best_split(self, rows: np.ndarray):
        w = self.weight[rows]
        wy = w * self.y[rows]
        total, positive = w.sum(), wy.sum()
        parent = _weighted_gini(np.array(total), np.array(positive))
        k = min(self.max_features, self.active.size)
        candidates = np.sort(self.rng.choice(self.active, size=k, replace=False))
        best = (0.0, None, None)
        for feature in candidates:
            x = self.X[rows, feature]
            order = np.argsort(x, kind="stable")
            cut, thresholds = split_candidates(x, order)
            if cut.size == 0:
                continue
            left_total = np.cumsum(w[order])[cut]
            left_positive = np.cumsum(wy[order])[cut]
            decrease = parent - _weighted_gini(left_total, left_positive) \
                - _weighted_gini(total - left_total, positive - left_positive)
            idx = int(np.argmax(decrease))
            if decrease[idx] > best[0] + 1e-12:
                best = (float(decrease[idx]), int(feature), float(thresholds[idx]))
        return best

    def _node(self, rows: np.ndarray, depth: int) -> int:
        w = self.weight[rows]
        total = float(w.sum())
        positive = float((w * self.y[rows]).sum())
        value = leaf_log_odds(positive, total)
        pure = positive <= 0 or positive >= total
        if depth >= self.max_depth or pure or rows.size < 2:
            return self.builder.add_leaf(value, total)
        _, feature, threshold = self._best_split(rows)
        if feature is None:
            return self.builder.add_leaf(value, total)
        node = self.builder.add_split(feature, threshold, total)
        goes_left = self.X[rows, feature] < threshold
        left = self._node(rows[goes_left], depth + 1)
        right = self._node(rows[~goes_left], depth + 1)
        self.builder.link(node, left, right)
        return node


def fit_random_forest(
    matrix,
    labels: Sequence[int],
    weights: Optional[ClassWeights],
    config: ModelConfig,
    threads: int = 1,
) -> TrainedModel:
    """Bootstrap forest; each split considers ceil(log2 p) seeded candidate features.

    Each leaf stores the log-odds of its weighted class-1 frequency and each tree has
    scale ``1/n_trees``, so the margin is the mean leaf log-odds over trees, a plain
    sum that tree attributions decompose exactly. The out-of-bag AUC is recorded in the metadata.
    """
    start = time.time()
    config.validate()
    X, names, active_mask = as_design(matrix)
    y = validate_labels(labels, require_both=False).astype(float)
    n, p = X.shape
    single_class = y.min() == y.max()
    if weights is None and not single_class:
        weights = class_weights(y)
    sample_weight = np.ones(n) if weights is None else weights.sample_weights(y)

    active = np.flatnonzero(active_mask)
    if active.size == 0:
        active = np.arange(p)
    max_features = max(1, math.ceil(math.log2(active.size))) if active.size > 1 else 1

    rng = make_rng(config.seed, FIT)
    tree_seeds = [child_seed(rng) for _ in range(config.n_trees)]

    def grow(seed: int):
        tree_rng = make_rng(seed, "forest-tree")
        counts = np.bincount(tree_rng.integers(0, n, n), minlength=n)
        rows = np.flatnonzero(counts)
        grower = _ForestTreeGrower(
            X, y, sample_weight * counts, active, max_features, config.max_depth, tree_rng
        )
        tree = grower.grow(rows)
        tree.scale = 1.0 / config.n_trees
        return tree, counts == 0

    grown = ordered_map(grow, tree_seeds, threads)
    trees = [tree for tree, _ in grown]

    oob_sum = np.zeros(n)
    oob_count = np.zeros(n)
    for tree, out_of_bag in grown:
        rows = np.flatnonzero(out_of_bag)
        if rows.size:
            oob_sum[rows] += tree.value[tree.leaves(X[rows])]
            oob_count[rows] += 1
    covered = oob_count > 0
    oob_auc = None
    if covered.any() and len(set(y[covered].tolist())) == 2:
        oob_auc = float(roc_auc_score(y[covered], oob_sum[covered] / oob_count[covered]))

    model = TrainedModel(
        config=config,
        columns=names or [f"x{j}" for j in range(p)],
        base_score=0.0,
        trees=trees,
        metadata={
            "n": int(n),
            "p": int(p),
            "class_weights": None if weights is None else weights.to_dict(),
            "seed": config.seed,
            "max_features": max_features,
            "oob_auc": oob_auc,
            "oob_coverage": float(covered.mean()),
        },
    )
    RiskLogger.log_performance("fit_random_forest", (time.time() - start) * 1000, {
        "n_trees": config.n_trees, "oob_auc": oob_auc,
    })
    return model
