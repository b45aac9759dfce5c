"""Exact Shapley interaction values."""

from dataclasses import dataclass
from math import factorial
from typing import List, Optional

import numpy as np

from explain.exact import Payoff, coalition_bits, coalition_values, shapley_from_values
from utils.errors import ValidationError

MAX_INTERACTION_FEATURES = 12


@dataclass
class InteractionMatrix:
    """Per-row p x p matrix: off-diagonal pair interactions, main effects on the diagonal."""

    values: np.ndarray
    phi: np.ndarray
    base_value: float
    columns: Optional[List[str]] = None

    def to_dict(self) -> dict:
        return {
            "columns": self.columns,
            "base_value": self.base_value,
            "phi": [float(v) for v in self.phi],
            "values": [[float(v) for v in row] for row in self.values],
        }


def interaction_weights(p: int) -> np.ndarray:
    """|S|! (p - |S| - 2)! / (2 (p - 1)!) indexed by |S|."""
    return np.array([factorial(s) * factorial(p - s - 2) / (2.0 * factorial(p - 1)) for s in range(p - 1)])


def interaction_values(model: Payoff, row: np.ndarray, background: np.ndarray, columns=None) -> InteractionMatrix:
    """Shapley interaction index of every feature pair, main effects as the remainder.

    Off-diagonal entries average the second difference
    ``val(S+j+k) - val(S+j) - val(S+k) + val(S)`` over coalitions without j and k;
    the diagonal is ``phi_j - sum_k Phi_jk`` so every row sums to the Shapley value.

    Raises:
        ValidationError: More than 12 features
    """
    p = np.asarray(row).size
    if p > MAX_INTERACTION_FEATURES:
        raise ValidationError(
            f"Exact interaction values support at most {MAX_INTERACTION_FEATURES} features (got {p})",
            field="features"
        )
    values = coalition_values(model, row, background)
    phi = shapley_from_values(values, p)
    matrix = np.zeros((p, p))
    if p >= 2:
        masks = np.arange(2 ** p, dtype=np.int64)
        sizes = coalition_bits(p).sum(axis=1)
        weights = interaction_weights(p)
        for j in range(p):
            for k in range(j + 1, p):
                rest = masks[((masks >> j) & 1 == 0) & ((masks >> k) & 1 == 0)]
                second = values[rest | (1 << j) | (1 << k)] - values[rest | (1 << j)] \
                    - values[rest | (1 << k)] + values[rest]
                matrix[j, k] = matrix[k, j] = np.sum(weights[sizes[rest]] * second)
    off_diagonal = matrix.sum(axis=1) - np.diag(matrix)
    np.fill_diagonal(matrix, phi - off_diagonal)
    return InteractionMatrix(values=matrix, phi=phi, base_value=float(values[0]), columns=columns)
