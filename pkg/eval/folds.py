"""Repeated (stratified) k-fold partitions."""

from dataclasses import dataclass
from typing import List, Sequence

import numpy as np

from utils.errors import ValidationError
from utils.seeding import CV, make_rng
from utils.validators import validate_labels


@dataclass(frozen=True)
class CvPlan:
    """k folds repeated ``repeats`` times."""

    k: int = 5
    repeats: int = 10
    seed: int = 0
    stratified: bool = True

    def to_dict(self) -> dict:
        return {"k": self.k, "repeats": self.repeats, "seed": self.seed, "stratified": self.stratified}


def stratified_folds(labels: Sequence[int], plan: CvPlan) -> List[List[np.ndarray]]:
    """Validation-row indices per repeat and fold.

    Each class is shuffled on its own, positives are laid out before negatives and
    position ``i`` goes to fold ``i mod k``, so fold sizes and per-fold positive
    counts differ by at most one.

    Raises:
        ValidationError: n < k, or a class has fewer than k rows when stratified
    """
    y = validate_labels(labels)
    n = y.size
    if plan.k < 2 or plan.repeats < 1:
        raise ValidationError("CV plan needs k >= 2 and repeats >= 1", field="cv")
    if n < plan.k:
        raise ValidationError(f"Cannot make {plan.k} folds from {n} rows", field="cv.k")
    positives = np.flatnonzero(y == 1)
    negatives = np.flatnonzero(y == 0)
    if plan.stratified and min(positives.size, negatives.size) < plan.k:
        raise ValidationError(
            f"Stratified {plan.k}-fold needs at least {plan.k} rows per class "
            f"(got {positives.size} positives, {negatives.size} negatives)",
            field="cv.k"
        )

    rng = make_rng(plan.seed, CV)
    repeats = []
    for _ in range(plan.repeats):
        if plan.stratified:
            order = np.concatenate([
                positives[rng.permutation(positives.size)],
                negatives[rng.permutation(negatives.size)],
            ])
        else:
            order = rng.permutation(n)
        fold_of = np.empty(n, dtype=np.int64)
        fold_of[order] = np.arange(n) % plan.k
        repeats.append([np.flatnonzero(fold_of == f) for f in range(plan.k)])
    return repeats
