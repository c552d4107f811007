import logging
import math
from concurrent.futures import ThreadPoolExecutor
from numbers import Integral, Real

import numpy as np

from .exceptions import ValidationError


__all__ = ["unit", "parallel_map", "check_positive", "check_int", "check_fraction", "check_finite"]


logger = logging.getLogger(__name__)


def unit(vector):
    vector = np.asarray(vector, dtype=float)
    return vector / np.linalg.norm(vector, axis=-1, keepdims=True)


def parallel_map(func, items, threads=1):
    """
    Map ``func`` over ``items``, optionally in a thread pool.  Results are returned
    in input order regardless of the number of threads.
    """
    items = list(items)
    if threads <= 1 or len(items) < 2:
        return [func(item) for item in items]

    with ThreadPoolExecutor(max_workers=threads) as executor:
        return list(executor.map(func, items))


def check_finite(value, field):
    if isinstance(value, bool) or not isinstance(value, Real) or not math.isfinite(value):
        raise ValidationError(f"expected a finite number, got {value!r}", field=field)
    return float(value)


def check_positive(value, field):
    value = check_finite(value, field)
    if value <= 0:
        raise ValidationError(f"must be positive, got {value!r}", field=field)
    return value


def check_int(value, field, minimum=None, maximum=None):
    if isinstance(value, bool) or not isinstance(value, Integral):
        raise ValidationError(f"expected an integer, got {value!r}", field=field)
    if minimum is not None and value < minimum:
        raise ValidationError(f"must be at least {minimum}, got {value}", field=field)
    if maximum is not None and value > maximum:
        raise ValidationError(f"must be at most {maximum}, got {value}", field=field)
    return int(value)


def check_fraction(value, field):
    value = check_finite(value, field)
    if not 0.0 <= value <= 1.0:
        raise ValidationError(f"must lie in [0, 1], got {value!r}", field=field)
    return value
