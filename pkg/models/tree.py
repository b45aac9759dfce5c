"""Array-backed binary decision trees shared by the forest and boosting learners."""

from dataclasses import dataclass, field
from typing import List

import numpy as np

LEAF = -1


@dataclass
class Tree:
    """A binary tree stored as parallel node arrays.

    Node ``i`` is a leaf when ``feature[i] == LEAF``; otherwise rows with
    ``x[feature[i]] < threshold[i]`` go to ``left[i]`` and the rest to ``right[i]``.
    The tree's output is ``scale * value[leaf]``.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    cover: np.ndarray
    scale: float = 1.0

    @property
    def n_nodes(self) -> int:
        return int(self.feature.size)

    def is_leaf(self, node: int) -> bool:
        return int(self.feature[node]) == LEAF

    def leaves(self, X: np.ndarray) -> np.ndarray:
        """Index of the leaf each row lands in."""
        X = np.asarray(X, dtype=float)
        node = np.zeros(X.shape[0], dtype=np.int64)
        active = self.feature[node] != LEAF
        while active.any():
            rows = np.flatnonzero(active)
            current = node[rows]
            go_left = X[rows, self.feature[current]] < self.threshold[current]
            node[rows] = np.where(go_left, self.left[current], self.right[current])
            active = self.feature[node] != LEAF
        return node

    def predict(self, X: np.ndarray) -> np.ndarray:
        """Scaled leaf values."""
        return self.scale * self.value[self.leaves(X)]

    def depth(self) -> int:
        """Length of the longest root-to-leaf path (a lone leaf has depth 0)."""
        best = 0
        stack = [(0, 0)]
        while stack:
            node, d = stack.pop()
            if self.is_leaf(node):
                best = max(best, d)
            else:
                stack.append((int(self.left[node]), d + 1))
                stack.append((int(self.right[node]), d + 1))
        return best

    def used_features(self) -> set:
        return {int(f) for f in self.feature if f != LEAF}

    def to_dict(self) -> dict:
        return {
            "feature": [int(v) for v in self.feature],
            "threshold": [float(v) for v in self.threshold],
            "left": [int(v) for v in self.left],
            "right": [int(v) for v in self.right],
            "value": [float(v) for v in self.value],
            "cover": [float(v) for v in self.cover],
            "scale": float(self.scale),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Tree":
        return cls(
            feature=np.array(data["feature"], dtype=np.int64),
            threshold=np.array(data["threshold"], dtype=float),
            left=np.array(data["left"], dtype=np.int64),
            right=np.array(data["right"], dtype=np.int64),
            value=np.array(data["value"], dtype=float),
            cover=np.array(data["cover"], dtype=float),
            scale=float(data.get("scale", 1.0)),
        )

    @classmethod
    def leaf_only(cls, value: float, cover: float = 0.0, scale: float = 1.0) -> "Tree":
        builder = TreeBuilder()
        builder.add_leaf(value, cover)
        return builder.build(scale)


@dataclass
class TreeBuilder:
    """Appends nodes in depth-first order and freezes them into a Tree."""

    feature: List[int] = field(default_factory=list)
    threshold: List[float] = field(default_factory=list)
    left: List[int] = field(default_factory=list)
    right: List[int] = field(default_factory=list)
    value: List[float] = field(default_factory=list)
    cover: List[float] = field(default_factory=list)

    def add_leaf(self, value: float, cover: float) -> int:
        return self._add(LEAF, 0.0, float(value), float(cover))

    def add_split(self, feature: int, threshold: float, cover: float) -> int:
        return self._add(int(feature), float(threshold), 0.0, float(cover))

    def link(self, node: int, left: int, right: int):
        self.left[node] = left
        self.right[node] = right

    def _add(self, feature: int, threshold: float, value: float, cover: float) -> int:
        self.feature.append(feature)
        self.threshold.append(threshold)
        self.left.append(LEAF)
        self.right.append(LEAF)
        self.value.append(value)
        self.cover.append(cover)
        return len(self.feature) - 1

    def build(self, scale: float = 1.0) -> Tree:
        return Tree(
            feature=np.array(self.feature, dtype=np.int64),
            threshold=np.array(self.threshold, dtype=float),
            left=np.array(self.left, dtype=np.int64),
            right=np.array(self.right, dtype=np.int64),
            value=np.array(self.value, dtype=float),
            cover=np.array(self.cover, dtype=float),
            scale=scale,
        )


def split_candidates(x: np.ndarray, order: np.ndarray):
    """Positions where sorted values change and the midpoint thresholds there.

    Returns ``(cut, thresholds)`` where rows ``order[:cut[k] + 1]`` fall left of
    ``thresholds[k]``.
    """
    xs = x[order]
    cut = np.flatnonzero(xs[1:] > xs[:-1])
    thresholds = (xs[cut] + xs[cut + 1]) / 2.0
    # Midpoint can round up onto the right value for adjacent floats
    thresholds = np.where(thresholds > xs[cut], thresholds, xs[cut + 1])
    return cut, thresholds
