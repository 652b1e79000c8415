"""Shared fixtures and value-network test doubles."""

import numpy as np
import pytest

from deep_value_nets.core import autodiff as ad
from deep_value_nets.core.oracle import relaxed_value_batch, relaxed_value_var
from deep_value_nets.models.config import Config, build_config


class OracleNet:
    """Stand-in value network whose value is the true relaxed metric.

    The input x *is* the ground truth, so v(x, y) = v*(y, x).
    """

    kind = "oracle"

    def __init__(self, size: int, metric: str = "f1"):
        self.metric = metric
        self.output_shape = (size,)

    def bind(self, tape, params, requires_grad=False):
        return {}

    def forward(self, bound, x, y, mode="eval", rng=None):
        v = relaxed_value_var(self.metric, y, np.asarray(x, dtype=np.float64))
        return v, v

    def value(self, params, x, y, mode="eval", rng=None):
        return relaxed_value_batch(self.metric, y, x)

    def output_gradient(self, params, x, y, ascend_on="value"):
        tape = ad.Tape()
        y_var = tape.leaf(y)
        v, _ = self.forward({}, x, y_var)
        return v.value.copy(), tape.backward(ad.sum(v))[y_var.index]


class ConstantNet(OracleNet):
    """Predicts the same value for every output."""

    kind = "constant"

    def __init__(self, size: int, constant: float):
        super().__init__(size)
        self.constant = constant

    def forward(self, bound, x, y, mode="eval", rng=None):
        v = y.tape.constant(np.full(y.shape[0], self.constant))
        return v, v

    def value(self, params, x, y, mode="eval", rng=None):
        return np.full(np.shape(y)[0], self.constant)

    def output_gradient(self, params, x, y, ascend_on="value"):
        return self.value(params, x, y), np.zeros_like(np.asarray(y, dtype=np.float64))


class LinearNet(OracleNet):
    """v = sigmoid(w . y) with a fixed small weight, so ascent moves y slowly."""

    kind = "linear"

    def __init__(self, size: int, weight: float = 0.01):
        super().__init__(size)
        self.weight = weight

    def forward(self, bound, x, y, mode="eval", rng=None):
        logit = ad.sum(y * self.weight, axis=1)
        return ad.sigmoid(logit), logit

    def value(self, params, x, y, mode="eval", rng=None):
        return 1.0 / (1.0 + np.exp(-self.weight * np.sum(y, axis=1)))


@pytest.fixture
def oracle_net():
    return OracleNet


@pytest.fixture
def constant_net():
    return ConstantNet


@pytest.fixture
def linear_net():
    return LinearNet


@pytest.fixture
def tiny_multilabel_config() -> Config:
    """Seconds-scale multi-label run on synthetic chain data."""
    return build_config(
        {
            "task": "multilabel",
            "data": {
                "synthetic": {
                    "kind": "multilabel",
                    "n_train": 40,
                    "n_test": 10,
                    "n_features": 8,
                    "n_labels": 4,
                }
            },
            "multilabel_net": {"local_hidden": [8], "global_hidden": [4]},
            "baseline": {"hidden": [8], "epochs": 5, "learning_rate": 0.01},
            "training": {
                "epochs": 3,
                "batch_size": 8,
                "seed": 3,
                "sampler": {"adversarial_steps": 3},
                "inference": {"steps": 5, "step_size": 1.0},
            },
        }
    )
