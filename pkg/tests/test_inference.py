"""Tests for projected gradient-ascent inference."""

import numpy as np
import pytest

from deep_value_nets.core import autodiff as ad
from deep_value_nets.core.inference import (
    binariness_defect,
    infer,
    project,
    round_output,
    visualize_prior,
)
from deep_value_nets.core.rng import Rng
from deep_value_nets.core.value_net import ConvValueNet
from deep_value_nets.models.config import ConvSpec, ConvValueNetConfig, InferenceConfig


def test_project_clamps_to_unit_box():
    assert np.array_equal(project([-0.5, 0.2, 1.7]), [0.0, 0.2, 1.0])


def test_round_output_ties_round_up():
    assert np.array_equal(round_output([0.5, 0.49, 0.51, 1.0, 0.0]), [1, 0, 1, 1, 0])
    assert np.array_equal(round_output([0.3, 0.7], threshold=0.3), [1, 1])


def test_binariness_defect():
    assert binariness_defect([0.0, 1.0, 1.0]) == 0.0
    assert binariness_defect([0.5, 0.5]) == 0.5
    assert binariness_defect([0.2, 0.9]) == pytest.approx(0.15)


def test_oracle_value_is_recovered(oracle_net):
    """Test that ascent on the true relaxed metric rounds to y* for 100 instances per size."""
    rng = Rng(21)
    for m in (4, 8, 12, 16):
        net = oracle_net(m, metric="f1")
        ystar = rng.bernoulli((100, m), 0.5)
        ystar[:, 0] = 1.0
        config = InferenceConfig(steps=200, step_size=1.0, record_trajectory=True)
        result = infer(net, {}, ystar, config)
        assert np.array_equal(round_output(result.y), ystar)
        assert np.allclose(result.values, 1.0)
        assert result.trajectory.is_feasible()


def test_zero_gradient_net_keeps_start(constant_net):
    net = constant_net(5, 0.3)
    y0 = Rng(0).uniform((4, 5))
    config = InferenceConfig(steps=10, init="provided", record_trajectory=True)
    result = infer(net, {}, np.zeros((4, 5)), config, y0=y0)
    assert np.array_equal(result.y, y0)
    assert np.allclose(result.values, 0.3)


def test_trajectory_records_every_step(linear_net):
    net = linear_net(3)
    config = InferenceConfig(steps=7, step_size=1.0, record_trajectory=True)
    result = infer(net, {}, np.zeros((2, 3)), config)
    trajectory = result.trajectory
    assert len(trajectory) == 8
    assert [p.step for p in trajectory.points] == list(range(8))
    assert trajectory.values().shape == (8, 2)
    assert trajectory.improved_fraction() == 1.0

    lines = trajectory.to_lines(index=1)
    assert lines[0].split()[0] == "0"
    assert len(lines[-1].split()) == 2 + 3
    assert len(trajectory.to_lines(include_y=False)[0].split()) == 2


def test_inference_is_deterministic(linear_net):
    net = linear_net(4, weight=0.5)
    config = InferenceConfig(steps=5, step_size=0.3)
    a = infer(net, {}, np.zeros((3, 4)), config)
    b = infer(net, {}, np.zeros((3, 4)), config)
    assert np.array_equal(a.y, b.y)
    assert a.trajectory is None


def test_start_errors(linear_net):
    net = linear_net(3)
    with pytest.raises(ValueError):
        infer(net, {}, np.zeros((2, 3)), InferenceConfig(init="provided"))
    with pytest.raises(ValueError):
        infer(net, {}, np.zeros((2, 3)), InferenceConfig(init="provided"), y0=np.zeros((2, 4)))
    with pytest.raises(ValueError):
        infer(net, {}, np.zeros((2, 3)), InferenceConfig(init="uniform"))
    result = infer(net, {}, np.zeros((2, 3)), InferenceConfig(init="uniform", steps=1), rng=Rng(0))
    assert np.all((result.y >= 0) & (result.y <= 1))


def test_visualize_prior_returns_relaxed_mask():
    config = ConvValueNetConfig(
        height=5,
        width=5,
        conv_specs=[
            ConvSpec(kernel=3, in_ch=2, out_ch=2),
            ConvSpec(kernel=3, in_ch=2, out_ch=2, stride=2),
            ConvSpec(kernel=3, in_ch=2, out_ch=2, stride=2),
        ],
        fc_widths=[4, 4],
    )
    net = ConvValueNet(config)
    params = net.init_params(Rng(1))
    mean_x = np.full((5, 5), 0.4)
    inference = InferenceConfig(steps=3, step_size=1.0)
    mask = visualize_prior(net, params, mean_x, 10.0, Rng(2), inference)
    assert mask.shape == (5, 5)
    assert np.all((mask >= 0) & (mask <= 1))
    again = visualize_prior(net, params, mean_x, 10.0, Rng(2), inference)
    assert np.array_equal(mask, again)


class QuadraticNet:
    """Value logit -sum((y - center)^2), maximised at y = center."""

    kind = "quadratic"

    def __init__(self, size: int, center: float = 0.8):
        self.output_shape = (size,)
        self.center = center

    def value(self, params, x, y, mode="eval", rng=None):
        logit = -np.sum((np.asarray(y) - self.center) ** 2, axis=1)
        return 1.0 / (1.0 + np.exp(-logit))

    def output_gradient(self, params, x, y, ascend_on="value"):
        tape = ad.Tape()
        y_var = tape.leaf(y)
        logit = -ad.sum(ad.square(y_var - self.center), axis=1)
        v = ad.sigmoid(logit)
        objective = ad.sum(logit if ascend_on == "logit" else v)
        return v.value.copy(), tape.backward(objective)[y_var.index]


def test_projection_is_idempotent_and_non_expansive():
    rng = Rng(31)
    for _ in range(50):
        a = rng.normal((16,), 0.5, 2.0)
        b = rng.normal((16,), 0.5, 2.0)
        assert np.array_equal(project(project(a)), project(a))
        assert np.max(np.abs(project(a) - project(b))) <= np.max(np.abs(a - b))


def test_quadratic_ascent_converges_to_center():
    net = QuadraticNet(5, center=0.8)
    config = InferenceConfig(steps=100, step_size=0.1, ascend_on="logit", record_trajectory=True)
    result = infer(net, {}, np.zeros((3, 1)), config)
    assert np.max(np.abs(result.y - 0.8)) < 0.01
    values = result.trajectory.values()
    assert np.all(np.diff(values, axis=0) >= -1e-12)


def test_uniform_start_needs_rng_and_is_seeded(linear_net):
    net = linear_net(4)
    config = InferenceConfig(steps=3, step_size=1.0, init="uniform", record_trajectory=True)
    with pytest.raises(ValueError, match="rng"):
        infer(net, {}, np.zeros((2, 4)), config)
    first = infer(net, {}, np.zeros((2, 4)), config, rng=Rng(8))
    second = infer(net, {}, np.zeros((2, 4)), config, rng=Rng(8))
    assert np.array_equal(first.y, second.y)
    assert not np.array_equal(first.trajectory.points[0].y, np.zeros((2, 4)))
