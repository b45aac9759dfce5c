"""Second-order gradient-boosted trees on class-weighted logistic loss, with DART dropout."""

import math
import time
from typing import Optional, Sequence

import numpy as np
from scipy.special import expit

from models.base import TrainedModel, as_design
from models.config import ModelConfig
from models.tree import Tree, TreeBuilder, split_candidates
from models.weights import ClassWeights, class_weights
from utils.logger import RiskLogger, warn
from utils.seeding import FIT, make_rng
from utils.validators import validate_labels


def soft_threshold(value, alpha: float):
    """L1 shrinkage of a gradient sum towards zero."""
    return np.sign(value) * np.maximum(np.abs(value) - alpha, 0.0)


def leaf_weight(grad_sum: float, hess_sum: float, alpha: float, reg_lambda: float) -> float:
    """Optimal leaf value -T_alpha(G) / (H + lambda)."""
    return float(-soft_threshold(grad_sum, alpha) / (hess_sum + reg_lambda))


def structure_score(grad_sum, hess_sum, alpha: float, reg_lambda: float):
    """T_alpha(G)^2 / (H + lambda)."""
    return soft_threshold(grad_sum, alpha) ** 2 / (hess_sum + reg_lambda)


class _BoostingTreeGrower:
    """Exact greedy growth of one regression tree on gradient/hessian statistics.

    A split's gain is ``score(left) + score(right) - score(parent)``; it is kept only
    when the gain exceeds gamma and both children carry at least ``min_child_weight``
    hessian. Ties go to the lowest feature index, then the lowest threshold.
    """

    def __init__(self, X, grad, hess, features, config: ModelConfig):
        self.X = X
        self.grad = grad
        self.hess = hess
        self.features = features
        self.config = config
        self.builder = TreeBuilder()

    def grow(self, rows: np.ndarray) -> Tree:
        self._node(rows, 0)
        return self.builder.build()

    def _best_split(self, rows: np.ndarray, grad_sum: float, hess_sum: float):
        cfg = self.config
        g, h = self.grad[rows], self.hess[rows]
        parent = structure_score(grad_sum, hess_sum, cfg.alpha, cfg.reg_lambda)
        best = (-math.inf, None, None)
        for feature in self.features:
            x = self.X[rows, feature]
            order = np.argsort(x, kind="stable")
            cut, thresholds = split_candidates(x, order)
            if cut.size == 0:
                continue
            left_g = np.cumsum(g[order])[cut]
            left_h = np.cumsum(h[order])[cut]
            right_g, right_h = grad_sum - left_g, hess_sum - left_h
            gain = structure_score(left_g, left_h, cfg.alpha, cfg.reg_lambda) \
                + structure_score(right_g, right_h, cfg.alpha, cfg.reg_lambda) - parent
            valid = (left_h >= cfg.min_child_weight) & (right_h >= cfg.min_child_weight) & (gain > cfg.gamma)
            if not valid.any():
                continue
            gain = np.where(valid, gain, -math.inf)
            idx = int(np.argmax(gain))
            if gain[idx] > best[0]:
                best = (float(gain[idx]), int(feature), float(thresholds[idx]))
        return best

    def _node(self, rows: np.ndarray, depth: int) -> int:
        cfg = self.config
        grad_sum = float(self.grad[rows].sum())
        hess_sum = float(self.hess[rows].sum())
        value = leaf_weight(grad_sum, hess_sum, cfg.alpha, cfg.reg_lambda)
        if depth >= cfg.max_depth or rows.size < 2:
            return self.builder.add_leaf(value, hess_sum)
        _, feature, threshold = self._best_split(rows, grad_sum, hess_sum)
        if feature is None:
            return self.builder.add_leaf(value, hess_sum)
        node = self.builder.add_split(feature, threshold, hess_sum)
        goes_left = self.X[rows, feature] < threshold
        left = self._node(rows[goes_left], depth + 1)
        right = self._node(rows[~goes_left], depth + 1)
        self.builder.link(node, left, right)
        return node


def fit_gbt(
    matrix,
    labels: Sequence[int],
    weights: Optional[ClassWeights],
    config: ModelConfig,
    threads: int = 1,
) -> TrainedModel:
    """Boosted trees with optional row/column subsampling and DART dropout.

    Each round drops every earlier tree independently with probability
    ``dropout_rate``, fits the new tree to the gradients of the remaining ensemble,
    and normalizes like DART's "tree" mode: with k trees dropped the new tree is
    scaled by ``eta / (k + eta)`` and the dropped ones by ``k / (k + eta)``
    (k = 0 leaves the new tree at ``eta``). ``base_score`` is the class-weighted
    log-odds of the training labels. Gradients use ``reference_weights`` so gamma,
    lambda, alpha and ``min_child_weight`` act on the same scale for any row count.
    """
    start = time.time()
    config.validate()
    X, names, active_mask = as_design(matrix)
    y = validate_labels(labels).astype(float)
    weights = weights or class_weights(y)
    s = weights.reference_weights(y)
    n, p = X.shape
    eta = config.learning_rate

    base_score = float(np.log((s * y).sum() / (s * (1.0 - y)).sum()))
    active = np.flatnonzero(active_mask)
    if active.size == 0:
        active = np.arange(p)
    rng = make_rng(config.seed, FIT)

    trees = []
    outputs = []  # unscaled leaf value of every training row, per tree
    drops = []
    for round_idx in range(config.n_trees):
        dropped = np.array([], dtype=np.int64)
        if config.dropout_rate > 0 and trees:
            dropped = np.flatnonzero(rng.random(len(trees)) < config.dropout_rate)
        keep = np.ones(len(trees), dtype=bool)
        keep[dropped] = False

        margin = np.full(n, base_score)
        for t in np.flatnonzero(keep):
            margin += trees[t].scale * outputs[t]
        prob = expit(margin)
        grad = s * (prob - y)
        hess = s * prob * (1.0 - prob)

        rows = np.arange(n)
        if config.subsample < 1:
            rows = np.flatnonzero(rng.random(n) < config.subsample)
        features = active
        if config.colsample_bytree < 1:
            k_cols = max(1, int(round(config.colsample_bytree * active.size)))
            features = np.sort(rng.choice(active, size=k_cols, replace=False))

        if rows.size == 0:
            tree = Tree.leaf_only(0.0)
        else:
            tree = _BoostingTreeGrower(X, grad, hess, features, config).grow(rows)

        if round_idx == 0 and tree.n_nodes == 1:
            warn("fit_gbt", "no splits passed gamma", gamma=config.gamma)
            trees = []
            outputs = []
            break

        k = dropped.size
        if k == 0:
            tree.scale = eta
        else:
            tree.scale = eta / (k + eta)
            for t in dropped:
                trees[t].scale *= k / (k + eta)
        trees.append(tree)
        outputs.append(tree.value[tree.leaves(X)])
        drops.append(int(k))

    model = TrainedModel(
        config=config,
        columns=names or [f"x{j}" for j in range(p)],
        base_score=base_score,
        trees=trees,
        metadata={
            "n": int(n),
            "p": int(p),
            "class_weights": weights.to_dict(),
            "seed": config.seed,
            "rounds": len(trees),
            "dart_drops": drops,
        },
    )
    RiskLogger.log_performance("fit_gbt", (time.time() - start) * 1000, {
        "n_trees": len(trees), "max_depth": config.max_depth,
    })
    return model
