"""Bounded FIFO replay buffer of training tuples."""

import logging
import threading
from collections import deque
from typing import Deque, Iterable, List, NamedTuple

import numpy as np

from deep_value_nets.core.rng import Rng

logger = logging.getLogger(__name__)


class TrainingTuple(NamedTuple):
    """Input, relaxed output and its oracle value v*(y, y*)."""

    x: np.ndarray
    y: np.ndarray
    v_star: float


class EmptyBufferError(LookupError):
    """Sampling from a buffer that holds no tuples."""


class ReplayBuffer:
    """Thread-safe FIFO of training tuples; the oldest tuple is evicted at capacity.

    Pushes and samples hold the same lock, so a consumer never observes a
    partially pushed batch.
    """

    def __init__(self, capacity: int = 10000):
        if capacity < 1:
            raise ValueError(f"capacity must be positive, got {capacity}")
        self.capacity = capacity
        self.entries: Deque[TrainingTuple] = deque(maxlen=capacity)
        self.lock = threading.RLock()
        self.pushed = 0

    def __len__(self) -> int:
        with self.lock:
            return len(self.entries)

    def push(self, tuples: Iterable[TrainingTuple]) -> None:
        tuples = list(tuples)
        with self.lock:
            evicted = max(len(self.entries) + len(tuples) - self.capacity, 0)
            self.entries.extend(tuples)
            self.pushed += len(tuples)
        if evicted:
            logger.debug(f"Replay buffer at capacity, evicted {evicted} oldest tuples")

    def sample(self, rng: Rng, batch_size: int) -> List[TrainingTuple]:
        """Uniform draw with replacement."""
        if batch_size < 1:
            raise ValueError(f"batch_size must be positive, got {batch_size}")
        with self.lock:
            if not self.entries:
                raise EmptyBufferError("cannot sample from an empty replay buffer")
            indices = rng.integers(0, len(self.entries), size=batch_size)
            return [self.entries[int(i)] for i in indices]

    def clear(self) -> None:
        with self.lock:
            self.entries.clear()


def buffer_push(buffer: ReplayBuffer, tuples: Iterable[TrainingTuple]) -> None:
    buffer.push(tuples)


def buffer_sample(buffer: ReplayBuffer, rng: Rng, batch_size: int) -> List[TrainingTuple]:
    return buffer.sample(rng, batch_size)
