"""Exact Shapley values by enumerating every coalition."""

from math import factorial
from typing import Callable, Tuple, Union

import numpy as np

from models.base import TrainedModel
from utils.errors import ValidationError

MAX_EXACT_FEATURES = 20
# Hybrid rows evaluated per model call
_CHUNK_ROWS = 200_000

Payoff = Union[TrainedModel, Callable[[np.ndarray], np.ndarray]]


def output_fn(model: Payoff) -> Callable[[np.ndarray], np.ndarray]:
    """The additive output explained for a model, or the callable itself."""
    if isinstance(model, TrainedModel):
        return model.raw_output
    return model


def coalition_bits(p: int) -> np.ndarray:
    """(2^p, p) membership table; row ``m`` has feature ``j`` iff bit ``j`` of ``m`` is set."""
    masks = np.arange(2 ** p, dtype=np.int64)
    return ((masks[:, None] >> np.arange(p)) & 1).astype(bool)


def coalition_values(model: Payoff, row: np.ndarray, background: np.ndarray) -> np.ndarray:
    """val(S) for every coalition S: mean output over background rows with S taken from ``row``."""
    f = output_fn(model)
    x = np.asarray(row, dtype=float).ravel()
    bg = np.asarray(background, dtype=float)
    if bg.ndim != 2 or bg.shape[0] == 0:
        raise ValidationError("Background sample must be a non-empty 2-D array", field="background")
    p = x.size
    bits = coalition_bits(p)
    values = np.empty(bits.shape[0])
    step = max(1, _CHUNK_ROWS // bg.shape[0])
    for start in range(0, bits.shape[0], step):
        block = bits[start:start + step]
        hybrid = np.where(block[:, None, :], x[None, None, :], bg[None, :, :])
        out = np.asarray(f(hybrid.reshape(-1, p)), dtype=float)
        values[start:start + step] = out.reshape(block.shape[0], bg.shape[0]).mean(axis=1)
    return values


def shapley_weights(p: int) -> np.ndarray:
    """|S|! (p - |S| - 1)! / p! indexed by |S|."""
    return np.array([factorial(s) * factorial(p - s - 1) / factorial(p) for s in range(p)])


def shapley_from_values(values: np.ndarray, p: int) -> np.ndarray:
    """Shapley values from a table of coalition values."""
    masks = np.arange(2 ** p, dtype=np.int64)
    sizes = coalition_bits(p).sum(axis=1)
    weights = shapley_weights(p)
    phi = np.zeros(p)
    for j in range(p):
        without = masks[(masks >> j) & 1 == 0]
        phi[j] = np.sum(weights[sizes[without]] * (values[without | (1 << j)] - values[without]))
    return phi


def shapley_exact(model: Payoff, row: np.ndarray, background: np.ndarray) -> Tuple[np.ndarray, float]:
    """Interventional Shapley values of one row and the base value val(empty set).

    Args:
        model: TrainedModel (its raw output is explained) or a vectorized callable
        row: Feature vector (standardized space)
        background: Reference rows the absent features are drawn from

    Raises:
        ValidationError: More than 20 features
    """
    p = np.asarray(row).size
    if p > MAX_EXACT_FEATURES:
        raise ValidationError(
            f"Exact enumeration supports at most {MAX_EXACT_FEATURES} features (got {p}); "
            "use tree_shap for tree ensembles",
            field="features"
        )
    values = coalition_values(model, row, background)
    return shapley_from_values(values, p), float(values[0])
