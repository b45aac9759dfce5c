"""Ordered worker pools."""

from typing import Callable, Iterable, List, TypeVar

from joblib import Parallel, delayed

T = TypeVar("T")
R = TypeVar("R")


def ordered_map(fn: Callable[[T], R], items: Iterable[T], threads: int = 1) -> List[R]:
    """Apply fn to every item, returning results in input order.

    Results never depend on the thread count because joblib preserves submission
    order and every task derives its randomness from its own explicit seed.
    """
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    return Parallel(n_jobs=threads, prefer="threads")(delayed(fn)(item) for item in items)
