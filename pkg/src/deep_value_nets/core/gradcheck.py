"""Central finite differences, the reference every analytic gradient is checked against."""

from typing import Callable, Tuple

import numpy as np


def numerical_gradient(
    fn: Callable[[np.ndarray], float], point: np.ndarray, step: float = 1e-5
) -> np.ndarray:
    """Central-difference gradient of a scalar function at ``point``."""
    point = np.array(point, dtype=np.float64)
    grad = np.zeros_like(point)
    flat = point.reshape(-1)
    grad_flat = grad.reshape(-1)
    for i in range(flat.size):
        original = flat[i]
        flat[i] = original + step
        upper = float(fn(point))
        flat[i] = original - step
        lower = float(fn(point))
        flat[i] = original
        grad_flat[i] = (upper - lower) / (2.0 * step)
    return grad


def gradient_error(
    analytic: np.ndarray, numeric: np.ndarray, abs_floor: float = 1e-7
) -> Tuple[float, bool]:
    """Worst relative error between two gradients and whether it passes 1e-4.

    Entries whose magnitude is below ``abs_floor`` in both gradients are
    compared absolutely.
    """
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    diff = np.abs(analytic - numeric)
    scale = np.maximum(np.abs(analytic), np.abs(numeric))
    relative = np.where(scale > abs_floor, diff / np.maximum(scale, abs_floor), 0.0)
    absolute_ok = diff <= abs_floor
    worst = float(relative.max()) if relative.size else 0.0
    passed = bool(np.all((relative <= 1e-4) | absolute_ok))
    return worst, passed
