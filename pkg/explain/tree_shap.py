"""Interventional Shapley values for tree ensembles.

For one explained row x and one reference row z, a tree's output only depends on
which side of each split x and z fall. Walking the tree, a split on a feature not
seen yet where x and z agree is simply followed; where they disagree the walk
branches, recording the feature in A (took x's side) or B (took z's side). A
leaf with value v reached with sets A and B is the game "all of A present, none
of B present", whose Shapley values are

    +v (|A|-1)! |B|! / (|A|+|B|)!   for features in A
    -v |A|! (|B|-1)! / (|A|+|B|)!   for features in B

Reference rows that share a path are walked together, so the cost per explained
row is one pass over each tree's reachable paths rather than one per reference row.
"""

import time
from functools import lru_cache
from math import factorial
from typing import Optional

import numpy as np

from explain.attribution import Attribution, background_rows
from models.base import TrainedModel
from models.tree import LEAF, Tree
from utils.errors import ValidationError
from utils.logger import RiskLogger
from utils.parallel import ordered_map


@lru_cache(maxsize=None)
def _coefficients(a: int, b: int):
    total = factorial(a + b)
    present = factorial(a - 1) * factorial(b) / total if a else 0.0
    absent = factorial(a) * factorial(b - 1) / total if b else 0.0
    return present, absent


def _tree_row_shap(tree: Tree, x: np.ndarray, bg_left: np.ndarray, phi: np.ndarray):
    """Add one tree's (unscaled, summed over references) contributions for row x into phi."""
    n_bg = bg_left.shape[1]
    stack = [(0, (), (), np.arange(n_bg))]
    while stack:
        node, in_a, in_b, refs = stack.pop()
        feature = int(tree.feature[node])
        if feature == LEAF:
            a, b = len(in_a), len(in_b)
            if a == 0 and b == 0:
                continue
            weight = tree.value[node] * refs.size
            present, absent = _coefficients(a, b)
            for j in in_a:
                phi[j] += weight * present
            for j in in_b:
                phi[j] -= weight * absent
            continue
        x_left = x[feature] < tree.threshold[node]
        x_child = int(tree.left[node] if x_left else tree.right[node])
        if feature in in_a:
            stack.append((x_child, in_a, in_b, refs))
            continue
        ref_left = bg_left[node, refs]
        if feature in in_b:
            left_refs, right_refs = refs[ref_left], refs[~ref_left]
            if left_refs.size:
                stack.append((int(tree.left[node]), in_a, in_b, left_refs))
            if right_refs.size:
                stack.append((int(tree.right[node]), in_a, in_b, right_refs))
            continue
        same = ref_left == x_left
        same_refs, other_refs = refs[same], refs[~same]
        if same_refs.size:
            stack.append((x_child, in_a, in_b, same_refs))
        if other_refs.size:
            z_child = int(tree.right[node] if x_left else tree.left[node])
            stack.append((x_child, in_a + (feature,), in_b, other_refs))
            stack.append((z_child, in_a, in_b + (feature,), other_refs))


def tree_shap_values(model: TrainedModel, X: np.ndarray, background: np.ndarray, threads: int = 1):
    """Shapley values (n x p) and base value of a tree ensemble's raw output."""
    if not model.is_tree_ensemble:
        raise ValidationError(
            f"tree_shap needs a tree ensemble, got {model.learner}; use shapley_exact", field="model"
        )
    X = np.asarray(X, dtype=float)
    bg = np.asarray(background, dtype=float)
    if bg.ndim != 2 or bg.shape[0] == 0:
        raise ValidationError("Background sample must be a non-empty 2-D array", field="background")

    # Which way every reference row goes at every node, per tree
    routing = []
    for tree in model.trees:
        internal = tree.feature != LEAF
        left = np.zeros((tree.n_nodes, bg.shape[0]), dtype=bool)
        left[internal] = bg[:, tree.feature[internal]].T < tree.threshold[internal][:, None]
        routing.append(left)

    def explain_row(i: int) -> np.ndarray:
        phi = np.zeros(X.shape[1])
        for tree, bg_left in zip(model.trees, routing):
            contribution = np.zeros(X.shape[1])
            _tree_row_shap(tree, X[i], bg_left, contribution)
            phi += tree.scale * contribution
        return phi / bg.shape[0]

    values = np.vstack(ordered_map(explain_row, range(X.shape[0]), threads)) if X.shape[0] else np.zeros((0, X.shape[1]))
    base_value = float(model.raw_output(bg).mean())
    return values, base_value


def tree_shap(model: TrainedModel, matrix, background, threads: int = 1, background_ref: Optional[dict] = None):
    """Attribution of every row of ``matrix`` for a random forest or boosted model."""
    start = time.time()
    bg = background_rows(background)
    values, base_value = tree_shap_values(model, matrix.rows, bg, threads)
    attribution = Attribution.from_matrix(
        matrix, values, base_value, method="tree",
        background_ref=background_ref or {"id": "explicit", "size": int(bg.shape[0])},
    )
    RiskLogger.log_performance("tree_shap", (time.time() - start) * 1000, {
        "rows": matrix.n_rows, "trees": len(model.trees),
    })
    return attribution
