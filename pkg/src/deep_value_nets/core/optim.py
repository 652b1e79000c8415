"""First-order parameter updates over NetworkParams."""

import logging
from typing import Dict, Mapping, Optional

import numpy as np

from deep_value_nets.core.value_net import NetworkParams

logger = logging.getLogger(__name__)

OPTIMIZERS = ("sgd", "adam")


class Optimizer:
    """Applies gradients to parameters, returning new parameters.

    Inputs are never modified in place; per-parameter state (velocity,
    moments) lives on the optimizer.
    """

    def __init__(self, learning_rate: float):
        if learning_rate < 0:
            raise ValueError(f"learning_rate must be nonnegative, got {learning_rate}")
        self.learning_rate = learning_rate
        self.steps = 0

    def step(self, params: NetworkParams, grads: Mapping[str, np.ndarray]) -> NetworkParams:
        missing = [name for name in params if name not in grads]
        if missing:
            raise KeyError(f"missing gradients for {missing}")
        self.steps += 1
        return NetworkParams(
            {name: self._update(name, params[name], np.asarray(grads[name])) for name in params}
        )

    def _update(self, name: str, value: np.ndarray, grad: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class SGD(Optimizer):
    """theta <- theta - lr * (momentum * velocity + grad)."""

    def __init__(self, learning_rate: float, momentum: float = 0.0):
        super().__init__(learning_rate)
        self.momentum = momentum
        self.velocity: Dict[str, np.ndarray] = {}

    def _update(self, name, value, grad):
        if self.momentum:
            velocity = self.momentum * self.velocity.get(name, 0.0) + grad
            self.velocity[name] = velocity
            grad = velocity
        return value - self.learning_rate * grad


class Adam(Optimizer):
    def __init__(
        self,
        learning_rate: float,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        super().__init__(learning_rate)
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.first: Dict[str, np.ndarray] = {}
        self.second: Dict[str, np.ndarray] = {}

    def _update(self, name, value, grad):
        m = self.beta1 * self.first.get(name, 0.0) + (1.0 - self.beta1) * grad
        v = self.beta2 * self.second.get(name, 0.0) + (1.0 - self.beta2) * grad * grad
        self.first[name] = m
        self.second[name] = v
        m_hat = m / (1.0 - self.beta1**self.steps)
        v_hat = v / (1.0 - self.beta2**self.steps)
        return value - self.learning_rate * m_hat / (np.sqrt(v_hat) + self.eps)


def make_optimizer(kind: str, learning_rate: float, momentum: Optional[float] = 0.0) -> Optimizer:
    if kind == "sgd":
        return SGD(learning_rate, momentum or 0.0)
    if kind == "adam":
        return Adam(learning_rate)
    raise ValueError(f"unknown optimizer '{kind}', expected one of {OPTIMIZERS}")
