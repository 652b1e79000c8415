"""Tests for training-tuple generation."""

import numpy as np
import pytest

from deep_value_nets.core.oracle import relaxed_value, relaxed_value_batch
from deep_value_nets.core.replay import ReplayBuffer
from deep_value_nets.core.rng import Rng
from deep_value_nets.core.tuples import (
    ProducerError,
    TupleGenerator,
    TupleProducer,
    corrupt_candidates,
    gen_adversarial,
    gen_ground_truth,
    gen_inference,
    gen_stratified,
    stratified_select,
)
from deep_value_nets.models.config import InferenceConfig, SamplerConfig


def test_ground_truth_tuple_has_value_one():
    t = gen_ground_truth(np.array([0.1, 0.2]), np.array([1.0, 0.0, 1.0]), metric="iou")
    assert t.v_star == 1.0
    assert np.array_equal(t.y, [1.0, 0.0, 1.0])


def test_inference_emits_every_kth_step_and_last(linear_net):
    net = linear_net(3)
    sampler = SamplerConfig(strategy="inference", inference_stride=10)
    inference = InferenceConfig(steps=30, step_size=1.0)
    ystar = np.array([1.0, 0.0, 1.0])
    tuples = gen_inference(net, {}, np.zeros(3), ystar, sampler, inference, "f1")
    assert len(tuples) == 4
    # y grows monotonically under a positive linear scorer
    sums = [t.y.sum() for t in tuples]
    assert sums == sorted(sums) and len(set(sums)) == 4
    for t in tuples:
        assert t.v_star == pytest.approx(relaxed_value("f1", t.y, ystar))


def test_stuck_inference_emits_one_tuple(constant_net):
    net = constant_net(4, 0.5)
    sampler = SamplerConfig(strategy="inference", inference_stride=3)
    generator = TupleGenerator(net, sampler, InferenceConfig(steps=9), "iou")
    ystar = np.ones((2, 4))
    tuples = generator.inference({}, np.zeros((2, 4)), ystar)
    assert len(tuples) == 2
    assert all(np.array_equal(t.y, np.zeros(4)) for t in tuples)
    assert all(t.v_star == 0.0 for t in tuples)


def test_corrupt_candidates_keep_ystar_first():
    rng = Rng(0)
    ystar = np.array([1.0, 0.0, 0.0, 1.0, 1.0])
    flipped = corrupt_candidates(rng, ystar, 16, "flip")
    assert flipped.shape == (16, 5)
    assert np.array_equal(flipped[0], ystar)
    assert set(np.unique(flipped)) <= {0.0, 1.0}

    mask = np.ones((3, 3))
    blended = corrupt_candidates(rng, mask, 8, "blend")
    assert blended.shape == (8, 3, 3)
    assert np.all((blended >= 0) & (blended <= 1))


def test_near_zero_temperature_selects_best():
    sampler = SamplerConfig(tau=1e-6, n_candidates=16)
    rng = Rng(1)
    ystar = np.array([1.0, 0.0, 1.0, 0.0, 1.0, 1.0])
    for _ in range(20):
        t = gen_stratified(rng, np.zeros(2), ystar, sampler, "f1")
        assert t.v_star == 1.0


def test_stratified_frequencies_follow_bucket_mass():
    """Chi-square goodness of fit, 10 categories, 1% critical value.

    0.8 .. 0.888 share one bucket and 0.9 sits alone in the next; members
    of a bucket are equally likely.
    """
    values = np.linspace(0.8, 0.9, 10)
    tau = 0.05
    n = 5000
    rng = Rng(2024)
    counts = np.bincount([stratified_select(rng, values, tau, 10) for _ in range(n)], minlength=10)
    weights = np.exp(values / tau)
    low = weights[:9].sum() / weights.sum()
    expected = n * np.append(np.full(9, low / 9), 1.0 - low)
    chi2 = float(np.sum((counts - expected) ** 2 / expected))
    assert chi2 < 21.67


def test_high_temperature_buckets_are_uniform():
    """With tau huge every bucket holding three candidates is equally likely."""
    values = np.repeat((np.arange(10) + 0.5) / 10, 3)
    n = 10000
    rng = Rng(7)
    picks = np.array([stratified_select(rng, values, 1e6, 10) for _ in range(n)])
    counts = np.bincount(picks // 3, minlength=10)
    expected = n / 10
    chi2 = float(np.sum((counts - expected) ** 2 / expected))
    assert chi2 < 21.67


def test_stratified_rejects_empty_pool():
    with pytest.raises(ValueError):
        stratified_select(Rng(0), np.array([]), 0.05, 10)


def test_adversarial_pushes_output_toward_loss_maximum(constant_net):
    """A net stuck at 0.2 is most wrong on the output whose true value is 1."""
    net = constant_net(1, 0.2)
    sampler = SamplerConfig(strategy="adversarial", adversarial_steps=3, adversarial_init="uniform")
    t = gen_adversarial(net, {}, Rng(3), np.zeros(1), np.array([1.0]), sampler, "iou")
    assert np.array_equal(t.y, [1.0])
    assert t.v_star == 1.0


def test_adversarial_tuples_are_feasible(oracle_net):
    net = oracle_net(5, metric="iou")
    sampler = SamplerConfig(strategy="adversarial", adversarial_steps=4, adversarial_step_size=2.0)
    generator = TupleGenerator(net, sampler, InferenceConfig(), "iou", "l2")
    ystar = Rng(4).bernoulli((6, 5), 0.5)
    tuples = generator.adversarial({}, Rng(5), ystar, ystar)
    assert len(tuples) == 6
    for t, target in zip(tuples, ystar):
        assert np.all((t.y >= 0) & (t.y <= 1))
        assert t.v_star == pytest.approx(relaxed_value("iou", t.y, target))


def test_mixture_counts(oracle_net):
    net = oracle_net(4)
    batch = 100
    rng = Rng(6)
    ystar = rng.bernoulli((batch, 4), 0.5)
    x = np.zeros((batch, 4))

    only_truth = SamplerConfig(strategy="mixture", mixture={"ground_truth": 2.0})
    generator = TupleGenerator(net, only_truth, InferenceConfig(), "f1")
    assert len(generator.generate({}, rng, x, ystar)) == 2 * batch

    mixed = SamplerConfig(strategy="mixture", mixture={"ground_truth": 1.0, "stratified": 0.5})
    tuples = TupleGenerator(net, mixed, InferenceConfig(), "f1").generate({}, rng, x, ystar)
    assert batch + 30 <= len(tuples) <= batch + 70


def test_generated_values_match_oracle(oracle_net):
    net = oracle_net(6)
    sampler = SamplerConfig(
        strategy="mixture",
        mixture={"ground_truth": 1.0, "inference": 1.0, "stratified": 1.0, "adversarial": 1.0},
        inference_stride=2,
        adversarial_steps=2,
    )
    generator = TupleGenerator(net, sampler, InferenceConfig(steps=4), "f1")
    ystar = Rng(7).bernoulli((5, 6), 0.5)
    tuples = generator.generate({}, Rng(8), ystar, ystar)
    ys = np.stack([t.y for t in tuples])
    xs = np.stack([t.x for t in tuples])
    recomputed = relaxed_value_batch("f1", ys, xs)
    assert np.allclose(recomputed, [t.v_star for t in tuples])


def test_producer_fills_buffer(linear_net):
    net = linear_net(3)
    sampler = SamplerConfig(strategy="inference", inference_stride=2)
    generator = TupleGenerator(net, sampler, InferenceConfig(steps=4), "f1")
    buffer = ReplayBuffer(100)
    ystar = Rng(9).bernoulli((10, 3), 0.5)
    producer = TupleProducer(generator, buffer, np.zeros((10, 3)), ystar, Rng(10), batch_size=4)
    producer.start()
    try:
        with pytest.raises(ProducerError):
            producer.wait_for_tuples(timeout=0.05)
        producer.update_snapshot({})
        producer.wait_for_tuples(timeout=10.0)
    finally:
        producer.stop()
    assert producer.produced > 0
    assert producer.error is None
    assert not producer.running


def test_producer_failure_is_raised_to_caller(linear_net, monkeypatch):
    net = linear_net(3)
    sampler = SamplerConfig(strategy="inference")
    generator = TupleGenerator(net, sampler, InferenceConfig(steps=2), "f1")

    def broken(*args, **kwargs):
        raise FloatingPointError("value network overflowed")

    monkeypatch.setattr(generator, "inference", broken)
    ystar = Rng(11).bernoulli((4, 3), 0.5)
    producer = TupleProducer(generator, ReplayBuffer(10), np.zeros((4, 3)), ystar, Rng(12))
    producer.update_snapshot({})
    producer.start()
    try:
        with pytest.raises(FloatingPointError, match="overflowed"):
            producer.wait_for_tuples(timeout=10.0)
    finally:
        producer.stop()
    assert isinstance(producer.error, FloatingPointError)
    assert not producer.running
    with pytest.raises(FloatingPointError):
        producer.check()


def test_uniform_start_inference_tuples(linear_net):
    net = linear_net(3)
    sampler = SamplerConfig(strategy="inference", inference_stride=2)
    generator = TupleGenerator(net, sampler, InferenceConfig(steps=4, init="uniform"), "f1")
    ystar = Rng(13).bernoulli((5, 3), 0.5)
    tuples = generator.generate({}, Rng(14), np.zeros((5, 3)), ystar)
    assert tuples
    for t in tuples:
        assert np.all((t.y >= 0) & (t.y <= 1))
