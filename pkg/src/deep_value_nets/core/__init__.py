"""Numerics: autodiff, oracle metrics, value networks, inference and tuple generation."""

from deep_value_nets.core.autodiff import ShapeError, Tape, TapeError, Var
from deep_value_nets.core.inference import infer, round_output
from deep_value_nets.core.oracle import relaxed_f1, relaxed_iou
from deep_value_nets.core.replay import ReplayBuffer, TrainingTuple
from deep_value_nets.core.rng import Rng
from deep_value_nets.core.value_net import ConvValueNet, MultiLabelValueNet, NetworkParams

__all__ = [
    "ConvValueNet",
    "MultiLabelValueNet",
    "NetworkParams",
    "ReplayBuffer",
    "Rng",
    "ShapeError",
    "Tape",
    "TapeError",
    "TrainingTuple",
    "Var",
    "infer",
    "relaxed_f1",
    "relaxed_iou",
    "round_output",
]
