"""Utility functions for expanderlab.

This module provides the small numerical helpers shared by the solvers:
worker-pool sizing and parallel mapping, predicate bisection with automatic
range expansion, log-log least squares, sign-change counting, a C-infinity
cutoff and the area of the unit sphere.
"""

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, Tuple, TypeVar

import numpy as np
from scipy.special import gamma

logger = logging.getLogger("expanderlab")

T = TypeVar("T")
R = TypeVar("R")

THREADS_ENV = "EXPANDERLAB_THREADS"


def worker_count() -> int:
    """Return the worker count requested through EXPANDERLAB_THREADS.

    Unset, empty or invalid values mean sequential evaluation (one worker).

    Example:
        ```python
        os.environ["EXPANDERLAB_THREADS"] = "4"
        worker_count()  # Returns 4
        ```
    """
    raw = os.environ.get(THREADS_ENV, "").strip()
    if not raw:
        return 1
    try:
        value = int(raw)
    except ValueError:
        logger.warning(f"Ignoring non-integer {THREADS_ENV}={raw!r}")
        return 1
    if value < 1:
        logger.warning(f"Ignoring non-positive {THREADS_ENV}={raw!r}")
        return 1
    return value


def parallel_map(func: Callable[[T], R], items: Iterable[T]) -> List[R]:
    """Map func over items, concurrently when more than one worker is allowed.

    Results always come back in input order, so the output does not depend on
    the worker count.
    """
    items = list(items)
    workers = min(worker_count(), max(1, len(items)))
    if workers == 1:
        return [func(item) for item in items]
    logger.debug(f"Mapping {len(items)} items over {workers} threads")
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, items))


def bisect_predicate(
    predicate: Callable[[float], bool],
    lo: float,
    hi: float,
    tol: float,
    max_iter: int = 200,
) -> Tuple[float, float, List[Tuple[float, float]]]:
    """Bisect a monotone boolean predicate with predicate(lo) False, predicate(hi) True.

    Args:
        predicate: The boolean function to bisect.
        lo: A point where the predicate is False.
        hi: A point where the predicate is True.
        tol: Stop once hi - lo <= tol.
        max_iter: Iteration cap.

    Returns:
        The final (lo, hi) bracket and the history of brackets.
    """
    history = [(lo, hi)]
    for _ in range(max_iter):
        if hi - lo <= tol:
            break
        mid = 0.5 * (lo + hi)
        if predicate(mid):
            hi = mid
        else:
            lo = mid
        history.append((lo, hi))
    return lo, hi, history


def expand_until(
    predicate: Callable[[float], bool],
    start: float,
    factor: float = 2.0,
    limit: float = 1e6,
) -> Tuple[float, float]:
    """Grow x geometrically from start until predicate(x) holds.

    Returns the last point where the predicate failed and the first point
    where it held, or raises ValueError when limit is passed first.
    """
    previous = 0.0
    x = start
    while x <= limit:
        if predicate(x):
            return previous, x
        previous = x
        x *= factor
    raise ValueError(f"predicate never held below {limit}")


def sign_changes(values: np.ndarray) -> np.ndarray:
    """Indices i such that values[i] and values[i+1] have strictly opposite signs.

    Exact zeros are skipped over, so a touch of zero is not a change.
    """
    values = np.asarray(values, dtype=float)
    nonzero = np.flatnonzero(values != 0)
    if len(nonzero) < 2:
        return np.array([], dtype=int)
    signs = np.sign(values[nonzero])
    flips = np.flatnonzero(signs[1:] != signs[:-1])
    return nonzero[flips]


def loglog_fit(x: np.ndarray, y: np.ndarray) -> Tuple[float, float, float]:
    """Least-squares line through (log x, log |y|).

    Returns:
        (slope, log prefactor, RMS residual of the fit)
    """
    lx = np.log(np.asarray(x, dtype=float))
    ly = np.log(np.abs(np.asarray(y, dtype=float)))
    coeffs, residuals, *_ = np.polyfit(lx, ly, 1, full=True)
    rms = math.sqrt(residuals[0] / len(lx)) if len(residuals) else 0.0
    return float(coeffs[0]), float(coeffs[1]), rms


def _bump(t: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """exp(-1/t) for t > 0 (0 otherwise) with its first two derivatives."""
    t = np.asarray(t, dtype=float)
    positive = t > 0
    safe = np.where(positive, t, 1.0)
    f = np.where(positive, np.exp(-1.0 / safe), 0.0)
    f1 = np.where(positive, f / safe**2, 0.0)
    f2 = np.where(positive, f * (1.0 / safe**4 - 2.0 / safe**3), 0.0)
    return f, f1, f2


def smooth_step(t: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """C-infinity nondecreasing transition from 0 (t <= 0) to 1 (t >= 1).

    g(t) = f(t) / (f(t) + f(1 - t)) with f(t) = exp(-1/t), returned with its
    first and second derivatives.
    """
    t = np.asarray(t, dtype=float)
    F, F1, F2 = _bump(t)
    G, G1, G2 = _bump(1.0 - t)
    # chain rule for f(1 - t)
    G1 = -G1
    S = F + G
    g = F / S
    N = F1 * G - F * G1
    g1 = N / S**2
    N1 = F2 * G - F * G2
    g2 = N1 / S**2 - 2.0 * N * (F1 + G1) / S**3
    return g, g1, g2


def smooth_cutoff(
    x: np.ndarray, R: float
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Cutoff equal to 0 on [0, R] and 1 on [2R, inf), with two derivatives in x."""
    g, g1, g2 = smooth_step((np.asarray(x, dtype=float) - R) / R)
    return g, g1 / R, g2 / R**2


def sphere_area(d: int) -> float:
    """Area of the unit sphere S^{d-1} in R^d."""
    return 2.0 * math.pi ** (d / 2) / float(gamma(d / 2))
