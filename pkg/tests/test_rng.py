"""Tests for seeded random streams."""

import numpy as np
import pytest

from deep_value_nets.core.rng import DistributionError, Rng


def test_same_seed_same_draws():
    a, b = Rng(42), Rng(42)
    assert np.array_equal(a.uniform((5,)), b.uniform((5,)))
    assert np.array_equal(a.normal((3, 2)), b.normal((3, 2)))
    assert np.array_equal(a.permutation(10), b.permutation(10))


def test_different_seeds_differ():
    assert not np.array_equal(Rng(1).uniform((8,)), Rng(2).uniform((8,)))


def test_split_is_deterministic_and_independent():
    """Test that children depend only on split order, not on parent draws."""
    parent_a, parent_b = Rng(7), Rng(7)
    child_a = parent_a.split()
    parent_b.uniform((100,))
    child_b = parent_b.split()
    assert np.array_equal(child_a.uniform((4,)), child_b.uniform((4,)))

    first, second = Rng(7).split(), None
    parent = Rng(7)
    parent.split()
    second = parent.split()
    assert not np.array_equal(first.uniform((4,)), second.uniform((4,)))


def test_normal_with_zero_sigma_is_constant():
    assert np.array_equal(Rng(0).normal((3,), 2.5, 0.0), np.full(3, 2.5))


def test_invalid_parameters_raise():
    rng = Rng(0)
    with pytest.raises(DistributionError):
        rng.normal((2,), 0.0, -1.0)
    with pytest.raises(DistributionError):
        rng.bernoulli((2,), 1.5)
    with pytest.raises(DistributionError):
        rng.uniform((2,), 1.0, 0.0)
    with pytest.raises(DistributionError):
        rng.categorical([0.0, 0.0])
    with pytest.raises(DistributionError):
        rng.categorical([1.0, -0.5])


def test_categorical_never_draws_zero_weight():
    draws = Rng(3).categorical([0.0, 1.0, 0.0, 3.0], size=2000)
    assert set(np.unique(draws)) <= {1, 3}
    # 3:1 odds
    assert 0.7 < np.mean(draws == 3) < 0.8


def test_bernoulli_values_and_rate():
    draws = Rng(5).bernoulli((10000,), 0.25)
    assert set(np.unique(draws)) <= {0.0, 1.0}
    assert abs(draws.mean() - 0.25) < 0.02


def test_normal_moments_converge():
    draws = Rng(17).normal(200_000, 2.0, 3.0)
    assert abs(draws.mean() - 2.0) < 0.05
    assert abs(draws.std() - 3.0) < 0.05
    # 4 sigma on the mean of the first 1000 draws
    assert abs(draws[:1000].mean() - 2.0) < 4 * 3.0 / np.sqrt(1000)
