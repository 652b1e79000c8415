"""Training and experiment orchestration."""

from deep_value_nets.services.trainer import evaluate, train, train_baseline

__all__ = ["evaluate", "train", "train_baseline"]
