"""Tests for the replay buffer."""

import threading

import numpy as np
import pytest

from deep_value_nets.core.replay import (
    EmptyBufferError,
    ReplayBuffer,
    TrainingTuple,
    buffer_push,
    buffer_sample,
)
from deep_value_nets.core.rng import Rng


def make_tuples(start: int, count: int):
    return [TrainingTuple(np.array([float(i)]), np.array([0.0]), 0.5) for i in range(start, start + count)]


def test_fifo_eviction_at_capacity():
    buffer = ReplayBuffer(capacity=5)
    buffer_push(buffer, make_tuples(0, 3))
    buffer_push(buffer, make_tuples(3, 4))
    assert len(buffer) == 5
    assert [float(t.x[0]) for t in buffer.entries] == [2.0, 3.0, 4.0, 5.0, 6.0]
    assert buffer.pushed == 7


def test_sample_draws_with_replacement_from_contents():
    buffer = ReplayBuffer(capacity=10)
    buffer.push(make_tuples(0, 2))
    batch = buffer_sample(buffer, Rng(0), 50)
    assert len(batch) == 50
    assert {float(t.x[0]) for t in batch} == {0.0, 1.0}


def test_sampling_is_seeded():
    buffer = ReplayBuffer()
    buffer.push(make_tuples(0, 20))
    a = [float(t.x[0]) for t in buffer.sample(Rng(4), 8)]
    b = [float(t.x[0]) for t in buffer.sample(Rng(4), 8)]
    assert a == b


def test_empty_and_invalid_requests():
    buffer = ReplayBuffer(capacity=3)
    with pytest.raises(EmptyBufferError):
        buffer.sample(Rng(0), 1)
    buffer.push(make_tuples(0, 1))
    with pytest.raises(ValueError):
        buffer.sample(Rng(0), 0)
    buffer.clear()
    assert len(buffer) == 0
    with pytest.raises(ValueError):
        ReplayBuffer(capacity=0)


def test_concurrent_pushes_keep_capacity():
    buffer = ReplayBuffer(capacity=500)

    def worker(offset):
        for k in range(50):
            buffer.push(make_tuples(offset + 10 * k, 10))

    threads = [threading.Thread(target=worker, args=(1000 * i,)) for i in range(4)]
    for thread in threads:
        thread.start()
    for thread in threads:
        thread.join()
    assert buffer.pushed == 2000
    assert len(buffer) == 500


def test_sampling_is_uniform_over_contents():
    """Chi-square goodness of fit over 10 tuples, 1% critical value."""
    buffer = ReplayBuffer(capacity=10)
    buffer.push(make_tuples(0, 10))
    n = 10_000
    batch = buffer.sample(Rng(23), n)
    counts = np.bincount([int(t.x[0]) for t in batch], minlength=10)
    expected = n / 10
    chi2 = float(np.sum((counts - expected) ** 2 / expected))
    assert chi2 < 21.67
