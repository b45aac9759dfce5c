"""Input validation for riskbench."""

import math
from typing import Sequence

import numpy as np

from utils.errors import SingleClassError, ValidationError


def validate_labels(labels: Sequence[int], require_both: bool = True, field: str = "labels") -> np.ndarray:
    """Validate a 0/1 outcome vector.

    Args:
        labels: Outcome sequence
        require_both: Raise when one of the classes is absent
        field: Field name for error messages

    Returns:
        Labels as an int64 array

    Raises:
        ValidationError: If a value is not 0 or 1
        SingleClassError: If require_both and only one class is present
    """
    y = np.asarray(labels)
    if y.ndim != 1:
        raise ValidationError(f"{field} must be one-dimensional, got shape {y.shape}", field=field)
    if y.size and not np.isin(y, (0, 1)).all():
        raise ValidationError(f"{field} must contain only 0/1 values", field=field)
    y = y.astype(np.int64)
    if require_both:
        n_pos = int(y.sum())
        if n_pos == 0 or n_pos == y.size:
            raise SingleClassError(
                f"{field} contain a single class ({y.size} samples, {n_pos} positives)",
                field=field
            )
    return y


def validate_finite(values, field: str) -> np.ndarray:
    """Validate that an array holds only finite numbers.

    Raises:
        ValidationError: If any value is NaN or Inf
    """
    arr = np.asarray(values, dtype=float)
    if not np.isfinite(arr).all():
        bad = int(np.flatnonzero(~np.isfinite(arr.ravel()))[0])
        raise ValidationError(f"{field} contains a non-finite value at flat index {bad}", field=field)
    return arr


def validate_fraction(value: float, field: str, closed_right: bool = False) -> float:
    """Validate a fraction in (0, 1) or (0, 1]."""
    if not isinstance(value, (int, float)) or math.isnan(value):
        raise ValidationError(f"{field} must be a number, got {value!r}", field=field)
    upper_ok = value <= 1 if closed_right else value < 1
    if not (value > 0 and upper_ok):
        bound = "(0, 1]" if closed_right else "(0, 1)"
        raise ValidationError(f"{field} must lie in {bound}, got {value}", field=field)
    return float(value)


def validate_seed(seed, field: str = "seed") -> int:
    """Validate an explicit integer seed (no wall-clock defaults)."""
    if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)):
        raise ValidationError(f"{field} must be an explicit integer, got {seed!r}", field=field)
    if seed < 0:
        raise ValidationError(f"{field} must be non-negative, got {seed}", field=field)
    return int(seed)
