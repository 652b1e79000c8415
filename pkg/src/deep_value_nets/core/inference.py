"""Gradient-based inference: projected ascent of the value network in y."""

import logging
from typing import List, NamedTuple, Optional, Tuple

import numpy as np

from deep_value_nets.core.rng import Rng
from deep_value_nets.models.config import InferenceConfig

logger = logging.getLogger(__name__)

# noise for prior visualization is given in 8-bit intensity units
INTENSITY_SCALE = 255.0


class TrajectoryPoint(NamedTuple):
    step: int
    y: np.ndarray
    value: np.ndarray


class Trajectory:
    """Iterates y^(0..T) and their predicted values for a batch of inputs."""

    def __init__(self):
        self.points: List[TrajectoryPoint] = []

    def __len__(self) -> int:
        return len(self.points)

    def append(self, step: int, y: np.ndarray, value: np.ndarray) -> None:
        self.points.append(TrajectoryPoint(step, y.copy(), np.asarray(value).copy()))

    def values(self) -> np.ndarray:
        """Predicted values ``[steps + 1, batch]``."""
        return np.stack([p.value for p in self.points])

    def is_feasible(self) -> bool:
        return all(np.all((p.y >= 0.0) & (p.y <= 1.0)) for p in self.points)

    def improved_fraction(self) -> float:
        """Share of inputs whose final value is at least the initial value."""
        values = self.values()
        return float(np.mean(values[-1] >= values[0]))

    def example(self, index: int) -> List[Tuple[int, np.ndarray, float]]:
        return [(p.step, p.y[index], float(p.value[index])) for p in self.points]

    def to_lines(self, index: int = 0, include_y: bool = True) -> List[str]:
        """Dump records "<step> <v_pred> [<y values...>]"."""
        lines = []
        for step, y, value in self.example(index):
            fields = [str(step), repr(value)]
            if include_y:
                fields.extend(repr(float(v)) for v in np.ravel(y))
            lines.append(" ".join(fields))
        return lines


class InferenceResult(NamedTuple):
    y: np.ndarray
    values: np.ndarray
    trajectory: Optional[Trajectory]


def project(y) -> np.ndarray:
    """Clamp every dimension to the feasible box [0, 1]."""
    return np.clip(np.asarray(y, dtype=np.float64), 0.0, 1.0)


def round_output(y, threshold: float = 0.5) -> np.ndarray:
    """Binary output; entries equal to the threshold round up."""
    return (np.asarray(y, dtype=np.float64) >= threshold).astype(np.float64)


def binariness_defect(y) -> float:
    """Mean distance of each dimension to the nearer of 0 and 1."""
    y = np.asarray(y, dtype=np.float64)
    return float(np.mean(np.minimum(y, 1.0 - y)))


def initial_output(
    shape: Tuple[int, ...], config: InferenceConfig, y0: Optional[np.ndarray], rng: Optional[Rng]
) -> np.ndarray:
    if config.init == "provided":
        if y0 is None:
            raise ValueError("init 'provided' needs a starting point")
        if np.shape(y0) != shape:
            raise ValueError(f"starting point has shape {np.shape(y0)}, expected {shape}")
        return project(y0)
    if config.init == "uniform":
        if rng is None:
            raise ValueError("init 'uniform' needs an rng")
        return rng.uniform(shape)
    return np.zeros(shape)


def infer(
    net,
    params,
    x: np.ndarray,
    config: InferenceConfig,
    y0: Optional[np.ndarray] = None,
    rng: Optional[Rng] = None,
) -> InferenceResult:
    """Run exactly ``config.steps`` projected ascent steps from y^(0).

    ``x`` carries a leading batch axis. The network is evaluated in eval
    mode, so the result is reproducible for a deterministic start.
    """
    shape = (np.shape(x)[0], *net.output_shape)
    y = initial_output(shape, config, y0, rng)
    trajectory = Trajectory() if config.record_trajectory else None

    for step in range(config.steps):
        value, grad = net.output_gradient(params, x, y, config.ascend_on)
        if trajectory is not None:
            trajectory.append(step, y, value)
        y = project(y + config.step_size * grad)
        logger.debug(f"inference step {step}: mean value {float(np.mean(value)):.4f}")

    final_value = net.value(params, x, y)
    if trajectory is not None:
        trajectory.append(config.steps, y, final_value)
    return InferenceResult(y, final_value, trajectory)


def visualize_prior(
    net,
    params,
    mean_x: np.ndarray,
    noise_sigma: float,
    rng: Rng,
    config: InferenceConfig,
) -> np.ndarray:
    """Relaxed output inferred for the mean input plus Gaussian noise.

    ``noise_sigma`` is in 8-bit intensity units and is rescaled to the
    [0, 1] image range.
    """
    mean_x = np.asarray(mean_x, dtype=np.float64)
    if mean_x.ndim == 2:
        mean_x = mean_x[..., np.newaxis]
    x = mean_x + rng.normal(mean_x.shape, 0.0, noise_sigma / INTENSITY_SCALE)
    result = infer(net, params, x[np.newaxis], config, rng=rng)
    return result.y[0]
