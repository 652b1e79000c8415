"""Regression losses between predicted values and oracle values."""

import numpy as np

from deep_value_nets.core import autodiff as ad

# predictions are clamped to [EPSILON, 1 - EPSILON] before the log
EPSILON = 1e-12

LOSSES = ("ce", "l2")


def ce_value_loss(v_pred, v_star) -> np.ndarray:
    """Soft cross-entropy -v* log v - (1 - v*) log(1 - v)."""
    v = np.clip(np.asarray(v_pred, dtype=np.float64), EPSILON, 1.0 - EPSILON)
    v_star = np.asarray(v_star, dtype=np.float64)
    return -v_star * np.log(v) - (1.0 - v_star) * np.log(1.0 - v)


def ce_value_loss_var(v_pred: ad.Var, v_star) -> ad.Var:
    v = ad.clamp(v_pred, EPSILON, 1.0 - EPSILON)
    return -(v_star * ad.log(v)) - (1.0 - v_star) * ad.log(1.0 - v)


def l2_value_loss_var(v_pred: ad.Var, v_star) -> ad.Var:
    return ad.square(v_pred - v_star)


def value_loss_var(kind: str, v_pred: ad.Var, v_star) -> ad.Var:
    """Elementwise loss of the chosen kind, same shape as ``v_pred``."""
    if kind == "ce":
        return ce_value_loss_var(v_pred, v_star)
    if kind == "l2":
        return l2_value_loss_var(v_pred, v_star)
    raise ValueError(f"unknown value loss '{kind}', expected one of {LOSSES}")


def bce_with_logits_var(logits: ad.Var, targets: np.ndarray) -> ad.Var:
    """Per-dimension cross-entropy of sigmoid(logits) against binary targets."""
    return ad.softplus(logits) - logits * targets
