from __future__ import annotations

from typing import Callable

import numpy as np

ACCEL_TOLERANCE = 1.0     # m/s^2
HEADING_TOLERANCE = 5.0   # degrees


def _pair(predictions, labels) -> tuple[np.ndarray, np.ndarray]:
    p, y = np.asarray(predictions), np.asarray(labels)
    if p.shape != y.shape:
        raise ValueError(f"length mismatch: {p.shape} vs {y.shape}")
    if p.size == 0:
        raise ValueError("empty input")
    return p, y


def exact_match_accuracy(predictions, labels) -> float:
    p, y = _pair(predictions, labels)
    return float(np.mean(p == y))


def angular_difference(a, b) -> np.ndarray:
    d = np.abs(np.asarray(a, dtype=float) - np.asarray(b, dtype=float)) % 360.0
    return np.minimum(d, 360.0 - d)


def tolerance_accuracy(predictions, labels, tolerance: float, angular: bool = False) -> float:
    """Fraction of predictions within ``tolerance`` of the label (wrapped for angles)."""
    if tolerance < 0:
        raise ValueError("tolerance must be >= 0")
    p, y = _pair(predictions, labels)
    err = angular_difference(p, y) if angular else np.abs(p.astype(float) - y.astype(float))
    return float(np.mean(err <= tolerance))


def scorer(task: str, tolerance: float | None = None) -> Callable[[np.ndarray, np.ndarray], float]:
    """Accuracy function used for a target: exact match for the merge flag,
    tolerance match for acceleration, wrapped tolerance for heading."""
    if task == "merge":
        return exact_match_accuracy
    if task == "accel":
        tol = ACCEL_TOLERANCE if tolerance is None else tolerance
        return lambda p, y: tolerance_accuracy(p, y, tol)
    if task == "heading":
        tol = HEADING_TOLERANCE if tolerance is None else tolerance
        return lambda p, y: tolerance_accuracy(p, y, tol, angular=True)
    raise ValueError(f"unknown task {task!r}")
