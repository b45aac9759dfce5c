"""Class weights that give both outcome classes the same total loss."""

from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence, Tuple

import numpy as np

from utils.errors import SingleClassError
from utils.validators import validate_labels

# Regularization strengths (C, gamma, lambda, alpha, min_child_weight) are read as if
# the training rows were rescaled to a cohort of this many episodes.
REFERENCE_ROWS = 1000


@dataclass(frozen=True)
class ClassWeights:
    """Per-class weights w_c = n / (2 n_c)."""

    w0: float
    w1: float
    n0: int
    n1: int

    @property
    def n(self) -> int:
        return self.n0 + self.n1

    def exact(self) -> Tuple[Fraction, Fraction]:
        """The weights as exact rationals."""
        return Fraction(self.n, 2 * self.n0), Fraction(self.n, 2 * self.n1)

    def sample_weights(self, labels: Sequence[int]) -> np.ndarray:
        """Per-row weight vector for a label sequence."""
        y = np.asarray(labels)
        return np.where(y == 1, self.w1, self.w0).astype(float)

    def reference_weights(self, labels: Sequence[int]) -> np.ndarray:
        """Sample weights rescaled to total REFERENCE_ROWS-sized mass.

        Duplicating every row leaves these sums unchanged, so fits built on them are
        invariant to it.
        """
        y = np.asarray(labels)
        return self.sample_weights(y) * (REFERENCE_ROWS / max(y.size, 1))

    def to_dict(self) -> dict:
        return {"w0": self.w0, "w1": self.w1, "n0": self.n0, "n1": self.n1}


def class_weights(labels: Sequence[int]) -> ClassWeights:
    """Weights from the label counts.

    Raises:
        SingleClassError: Only one class is present
    """
    y = validate_labels(labels, require_both=False)
    n1 = int(y.sum())
    n0 = int(y.size - n1)
    if n0 == 0 or n1 == 0:
        raise SingleClassError("cannot weight a one-class problem", field="labels")
    n = n0 + n1
    return ClassWeights(w0=n / (2 * n0), w1=n / (2 * n1), n0=n0, n1=n1)
