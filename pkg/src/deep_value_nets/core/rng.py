"""Seeded, splittable random streams."""

import logging
from typing import Optional, Sequence, Tuple, Union

import numpy as np

logger = logging.getLogger(__name__)

Shape = Union[int, Tuple[int, ...]]


class DistributionError(ValueError):
    """Invalid distribution parameters."""


class Rng:
    """Counter-based (Philox) generator with deterministic splitting.

    The same seed and the same sequence of calls give bit-identical draws.
    ``split()`` derives independent child streams in call order, so workers
    can own their own stream without touching the parent's.
    """

    def __init__(self, seed: int = 0, _sequence: Optional[np.random.SeedSequence] = None):
        self.seed = int(seed)
        self._sequence = _sequence if _sequence is not None else np.random.SeedSequence(self.seed)
        self._generator = np.random.Generator(np.random.Philox(self._sequence))

    def split(self) -> "Rng":
        (child,) = self._sequence.spawn(1)
        return Rng(self.seed, _sequence=child)

    def uniform(self, shape: Shape = (), low: float = 0.0, high: float = 1.0) -> np.ndarray:
        if not high >= low:
            raise DistributionError(f"uniform needs low <= high, got [{low}, {high}]")
        return np.asarray(self._generator.uniform(low, high, size=shape), dtype=np.float64)

    def normal(self, shape: Shape = (), mean: float = 0.0, std: float = 1.0) -> np.ndarray:
        if not std >= 0.0:
            raise DistributionError(f"normal needs sigma >= 0, got {std}")
        if std == 0.0:
            return np.full(shape, float(mean))
        return np.asarray(self._generator.normal(mean, std, size=shape), dtype=np.float64)

    def bernoulli(self, shape: Shape = (), p: float = 0.5) -> np.ndarray:
        if not 0.0 <= p <= 1.0:
            raise DistributionError(f"bernoulli needs p in [0, 1], got {p}")
        return (self._generator.random(size=shape) < p).astype(np.float64)

    def categorical(self, weights: Sequence[float], size: Optional[int] = None):
        """Index draw(s) with probability proportional to ``weights``."""
        weights = np.asarray(weights, dtype=np.float64)
        if weights.ndim != 1 or weights.size == 0:
            raise DistributionError("categorical needs a non-empty 1-D weight vector")
        if np.any(weights < 0) or not np.all(np.isfinite(weights)):
            raise DistributionError("categorical weights must be finite and nonnegative")
        total = weights.sum()
        if total <= 0:
            raise DistributionError("categorical weights must have a positive sum")
        # inverse CDF, one uniform per draw
        cdf = np.cumsum(weights / total)
        u = self._generator.random(size=size)
        index = np.searchsorted(cdf, u, side="right")
        return np.minimum(index, np.flatnonzero(weights)[-1])

    def integers(self, low: int, high: int, size: Optional[Shape] = None):
        return self._generator.integers(low, high, size=size)

    def permutation(self, n: int) -> np.ndarray:
        return self._generator.permutation(n)
