"""Small assertion helpers shared by the expanderlab tests."""

from typing import Callable

import numpy as np


def sup_distance(a, b) -> float:
    gap = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    return float(np.max(np.abs(gap)))


def assert_sup_close(a, b, tol: float, what: str = "values") -> None:
    gap = sup_distance(a, b)
    assert gap <= tol, f"{what} differ by {gap:.3e} > {tol:.1e}"


def assert_nonincreasing(values, tol: float = 0.0, what: str = "sequence") -> None:
    steps = np.diff(np.asarray(values, dtype=float))
    worst = float(np.max(steps, initial=0.0))
    assert worst <= tol, f"{what} increases by {worst:.3e}"


def assert_strictly_decreasing(values, what: str = "sequence") -> None:
    steps = np.diff(np.asarray(values, dtype=float))
    assert np.all(steps < 0), f"{what} is not strictly decreasing: {values}"


def constant_data(value: float) -> Callable[[np.ndarray], np.ndarray]:
    return lambda r: np.full_like(np.asarray(r, dtype=float), value)
