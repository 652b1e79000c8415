"""Value networks v(x, y; theta) in (0, 1) and the independent-label baselines."""

import logging
from collections.abc import Mapping
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np

from deep_value_nets.core import autodiff as ad
from deep_value_nets.core.rng import Rng
from deep_value_nets.models.config import (
    BaselineConfig,
    ConvSpec,
    ConvValueNetConfig,
    MultiLabelValueNetConfig,
)

logger = logging.getLogger(__name__)

MODES = ("train", "eval")


class NetworkParams(Mapping):
    """Named parameter arrays (theta); treated as immutable once built."""

    def __init__(self, tensors: Dict[str, np.ndarray]):
        self._tensors = {name: np.asarray(value, dtype=np.float64) for name, value in tensors.items()}

    def __getitem__(self, name: str) -> np.ndarray:
        return self._tensors[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self._tensors)

    def __len__(self) -> int:
        return len(self._tensors)

    def __repr__(self) -> str:
        shapes = ", ".join(f"{k}={v.shape}" for k, v in self._tensors.items())
        return f"NetworkParams({shapes})"

    def copy(self) -> "NetworkParams":
        return NetworkParams({name: value.copy() for name, value in self._tensors.items()})

    def count(self) -> int:
        return int(sum(value.size for value in self._tensors.values()))

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(value)) for value in self._tensors.values())

    def zeros_like(self) -> "NetworkParams":
        return NetworkParams({name: np.zeros_like(v) for name, v in self._tensors.items()})

    def equals(self, other: "NetworkParams") -> bool:
        """Bit-exact equality of names, shapes and values."""
        if list(self) != list(other):
            return False
        return all(
            self[name].shape == other[name].shape
            and self[name].tobytes() == other[name].tobytes()
            for name in self
        )


def _dense_shapes(prefix: str, widths: List[int]) -> Dict[str, Tuple[int, ...]]:
    shapes: Dict[str, Tuple[int, ...]] = {}
    for i, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:])):
        name = "out" if i == len(widths) - 2 else str(i)
        shapes[f"{prefix}.{name}.w"] = (fan_in, fan_out)
        shapes[f"{prefix}.{name}.b"] = (fan_out,)
    return shapes


def _dense_count(widths: List[int]) -> int:
    return sum(a * b + b for a, b in zip(widths[:-1], widths[1:]))


def _dense_stack(
    bound: Dict[str, ad.Var], prefix: str, h: ad.Var, hidden_layers: int, activation
) -> ad.Var:
    for i in range(hidden_layers):
        h = activation(h @ bound[f"{prefix}.{i}.w"] + bound[f"{prefix}.{i}.b"])
    return h @ bound[f"{prefix}.out.w"] + bound[f"{prefix}.out.b"]


def _fan_in(shape: Tuple[int, ...]) -> int:
    # dense [in, out]; conv [k, k, in, out]
    return int(np.prod(shape[:-1]))


def _init(shapes: Dict[str, Tuple[int, ...]], rng: Rng, scheme: str) -> NetworkParams:
    tensors: Dict[str, np.ndarray] = {}
    for name, shape in shapes.items():
        if name.endswith(".b") or scheme == "zeros":
            tensors[name] = np.zeros(shape)
        elif scheme == "fan_in_uniform":
            # variance 1 / fan_in
            limit = np.sqrt(3.0 / _fan_in(shape))
            tensors[name] = rng.uniform(shape, -limit, limit)
        else:
            raise ValueError(f"unknown init scheme '{scheme}'")
    return NetworkParams(tensors)


def _check_mode(mode: str) -> None:
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got '{mode}'")


class ValueNetwork:
    """Scorer v(x, y; theta) = sigmoid(logit(x, y)).

    Inputs carry a leading batch axis; every row is scored independently, so
    the gradient of the summed value with respect to ``y`` is the per-example
    gradient.
    """

    kind = "value"

    def parameter_shapes(self) -> Dict[str, Tuple[int, ...]]:
        raise NotImplementedError

    def parameter_count(self) -> int:
        raise NotImplementedError

    @property
    def output_shape(self) -> Tuple[int, ...]:
        raise NotImplementedError

    def init_params(self, rng: Rng, scheme: str = "fan_in_uniform") -> NetworkParams:
        return _init(self.parameter_shapes(), rng, scheme)

    def bind(
        self, tape: ad.Tape, params: NetworkParams, requires_grad: bool = False
    ) -> Dict[str, ad.Var]:
        expected = self.parameter_shapes()
        for name, shape in expected.items():
            if name not in params:
                raise KeyError(f"missing parameter '{name}'")
            if params[name].shape != shape:
                raise ad.ShapeError(f"parameter {name}", params[name].shape, shape)
        return {name: tape.leaf(params[name], requires_grad) for name in expected}

    def logit(
        self,
        bound: Dict[str, ad.Var],
        x: np.ndarray,
        y: ad.Var,
        mode: str = "eval",
        rng: Optional[Rng] = None,
    ) -> ad.Var:
        raise NotImplementedError

    def forward(
        self,
        bound: Dict[str, ad.Var],
        x: np.ndarray,
        y: ad.Var,
        mode: str = "eval",
        rng: Optional[Rng] = None,
    ) -> Tuple[ad.Var, ad.Var]:
        """Value and logit, both ``[batch]``, recorded on ``y``'s tape."""
        _check_mode(mode)
        logit = self.logit(bound, x, y, mode, rng)
        return ad.sigmoid(logit), logit

    def value(
        self,
        params: NetworkParams,
        x: np.ndarray,
        y: np.ndarray,
        mode: str = "eval",
        rng: Optional[Rng] = None,
    ) -> np.ndarray:
        """Numeric value estimates ``[batch]``."""
        tape = ad.Tape()
        bound = self.bind(tape, params)
        v, _ = self.forward(bound, x, tape.constant(y), mode, rng)
        return v.value.copy()

    def output_gradient(
        self, params: NetworkParams, x: np.ndarray, y: np.ndarray, ascend_on: str = "value"
    ) -> Tuple[np.ndarray, np.ndarray]:
        """Eval-mode values and d(value or logit)/dy for a batch."""
        tape = ad.Tape()
        bound = self.bind(tape, params)
        y_var = tape.leaf(y)
        v, logit = self.forward(bound, x, y_var, "eval")
        objective = ad.sum(logit if ascend_on == "logit" else v)
        grads = tape.backward(objective)
        return v.value.copy(), grads[y_var.index]


class MultiLabelValueNet(ValueNetwork):
    """Local scores non-linear in x but linear in y, plus a global label network."""

    kind = "multilabel"

    def __init__(self, config: MultiLabelValueNetConfig):
        if config.input_dim is None or config.label_dim is None:
            raise ValueError("multi-label network needs input_dim and label_dim")
        self.config = config

    @property
    def output_shape(self) -> Tuple[int, ...]:
        return (self.config.label_dim,)

    def _local_widths(self) -> List[int]:
        c = self.config
        return [c.input_dim, *c.local_hidden, c.label_dim]

    def _global_widths(self) -> List[int]:
        c = self.config
        return [c.label_dim, *c.global_hidden, 1]

    def parameter_shapes(self) -> Dict[str, Tuple[int, ...]]:
        shapes = _dense_shapes("local", self._local_widths())
        if self.config.use_global:
            shapes.update(_dense_shapes("global", self._global_widths()))
        return shapes

    def parameter_count(self) -> int:
        c = self.config
        local_in = [c.input_dim, *c.local_hidden]
        local_out = [*c.local_hidden, c.label_dim]
        count = sum((i + 1) * o for i, o in zip(local_in, local_out))
        if c.use_global:
            count += _dense_count(self._global_widths())
        return count

    def logit(self, bound, x, y, mode="eval", rng=None) -> ad.Var:
        c = self.config
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != c.input_dim:
            raise ad.ShapeError("value_multilabel x", x.shape, ("batch", c.input_dim))
        if len(y.shape) != 2 or y.shape != (x.shape[0], c.label_dim):
            raise ad.ShapeError("value_multilabel y", y.shape, (x.shape[0], c.label_dim))

        scores = _dense_stack(bound, "local", y.tape.constant(x), len(c.local_hidden), ad.softplus)
        logit = ad.sum(scores * y, axis=1)
        if c.use_global:
            global_term = _dense_stack(bound, "global", y, len(c.global_hidden), ad.softplus)
            logit = logit + ad.reshape(global_term, (x.shape[0],))
        return logit


def conv_output_size(size: int, specs: List[ConvSpec]) -> int:
    for spec in specs:
        size = ad.same_padding(size, spec.kernel, spec.stride)[0]
    return size


class ConvValueNet(ValueNetwork):
    """Image and mask stacked as channels, 3 convolutions, 2 dense layers, sigmoid head."""

    kind = "grid"

    def __init__(self, config: ConvValueNetConfig):
        self.config = config

    @property
    def output_shape(self) -> Tuple[int, ...]:
        return (self.config.height, self.config.width)

    def _flat_size(self) -> int:
        c = self.config
        return (
            conv_output_size(c.height, c.conv_specs)
            * conv_output_size(c.width, c.conv_specs)
            * c.conv_specs[-1].out_ch
        )

    def parameter_shapes(self) -> Dict[str, Tuple[int, ...]]:
        c = self.config
        shapes: Dict[str, Tuple[int, ...]] = {}
        for i, spec in enumerate(c.conv_specs):
            shapes[f"conv{i}.w"] = (spec.kernel, spec.kernel, spec.in_ch, spec.out_ch)
            shapes[f"conv{i}.b"] = (spec.out_ch,)
        shapes.update(_dense_shapes("fc", [self._flat_size(), *c.fc_widths, 1]))
        return shapes

    def parameter_count(self) -> int:
        c = self.config
        conv = sum(s.kernel * s.kernel * s.in_ch * s.out_ch + s.out_ch for s in c.conv_specs)
        return conv + _dense_count([self._flat_size(), *c.fc_widths, 1])

    def logit(self, bound, x, y, mode="eval", rng=None) -> ad.Var:
        c = self.config
        x = np.asarray(x, dtype=np.float64)
        expected = (c.height, c.width, c.channels)
        if x.ndim != 4 or x.shape[1:] != expected:
            raise ad.ShapeError("value_grid x", x.shape, ("batch", *expected))
        batch = x.shape[0]
        if y.shape != (batch, c.height, c.width):
            raise ad.ShapeError("value_grid y", y.shape, (batch, c.height, c.width))

        h = ad.concat([x, ad.reshape(y, (batch, c.height, c.width, 1))], axis=-1)
        for i, spec in enumerate(c.conv_specs):
            h = ad.relu(ad.conv2d(h, bound[f"conv{i}.w"], spec.stride) + bound[f"conv{i}.b"])
        h = ad.reshape(h, (batch, self._flat_size()))

        h = ad.relu(h @ bound["fc.0.w"] + bound["fc.0.b"])
        if mode == "train" and c.dropout_keep < 1.0:
            if rng is None:
                raise ValueError("train mode with dropout needs an rng")
            h = ad.dropout(h, rng.bernoulli(h.shape, c.dropout_keep), c.dropout_keep)
        h = ad.relu(h @ bound["fc.1.w"] + bound["fc.1.b"])
        return ad.reshape(h @ bound["fc.out.w"] + bound["fc.out.b"], (batch,))


class IndependentBaseline:
    """Per-dimension sigmoid predictions trained with cross-entropy on y*."""

    kind = "baseline"

    def parameter_shapes(self) -> Dict[str, Tuple[int, ...]]:
        raise NotImplementedError

    @property
    def output_shape(self) -> Tuple[int, ...]:
        raise NotImplementedError

    def init_params(self, rng: Rng, scheme: str = "fan_in_uniform") -> NetworkParams:
        return _init(self.parameter_shapes(), rng, scheme)

    def bind(self, tape: ad.Tape, params: NetworkParams, requires_grad: bool = False):
        return ValueNetwork.bind(self, tape, params, requires_grad)

    def logits(self, bound: Dict[str, ad.Var], x: np.ndarray) -> ad.Var:
        raise NotImplementedError

    def probabilities(self, params: NetworkParams, x: np.ndarray) -> np.ndarray:
        tape = ad.Tape()
        return ad.sigmoid(self.logits(self.bind(tape, params), x)).value.copy()


class MultiLabelBaseline(IndependentBaseline):
    """Feed-forward network with ReLU hidden layers and one sigmoid per label."""

    def __init__(self, input_dim: int, label_dim: int, config: BaselineConfig):
        self.input_dim = input_dim
        self.label_dim = label_dim
        self.config = config

    @property
    def output_shape(self) -> Tuple[int, ...]:
        return (self.label_dim,)

    def parameter_shapes(self) -> Dict[str, Tuple[int, ...]]:
        return _dense_shapes("mlp", [self.input_dim, *self.config.hidden, self.label_dim])

    def logits(self, bound, x) -> ad.Var:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.input_dim:
            raise ad.ShapeError("baseline_forward", x.shape, ("batch", self.input_dim))
        tape = next(iter(bound.values())).tape
        return _dense_stack(bound, "mlp", tape.constant(x), len(self.config.hidden), ad.relu)


class ConvBaseline(IndependentBaseline):
    """The value network's convolution trunk at stride 1 with a 1x1 logit head."""

    def __init__(self, config: ConvValueNetConfig):
        self.config = config
        specs = []
        in_ch = config.channels
        for spec in config.conv_specs:
            specs.append(ConvSpec(kernel=spec.kernel, in_ch=in_ch, out_ch=spec.out_ch, stride=1))
            in_ch = spec.out_ch
        self.specs = specs

    @property
    def output_shape(self) -> Tuple[int, ...]:
        return (self.config.height, self.config.width)

    def parameter_shapes(self) -> Dict[str, Tuple[int, ...]]:
        shapes: Dict[str, Tuple[int, ...]] = {}
        for i, spec in enumerate(self.specs):
            shapes[f"conv{i}.w"] = (spec.kernel, spec.kernel, spec.in_ch, spec.out_ch)
            shapes[f"conv{i}.b"] = (spec.out_ch,)
        shapes["head.w"] = (1, 1, self.specs[-1].out_ch, 1)
        shapes["head.b"] = (1,)
        return shapes

    def logits(self, bound, x) -> ad.Var:
        c = self.config
        x = np.asarray(x, dtype=np.float64)
        expected = (c.height, c.width, c.channels)
        if x.ndim != 4 or x.shape[1:] != expected:
            raise ad.ShapeError("baseline_forward", x.shape, ("batch", *expected))
        h = next(iter(bound.values())).tape.constant(x)
        for i, spec in enumerate(self.specs):
            h = ad.relu(ad.conv2d(h, bound[f"conv{i}.w"], 1) + bound[f"conv{i}.b"])
        h = ad.conv2d(h, bound["head.w"], 1) + bound["head.b"]
        return ad.reshape(h, (x.shape[0], c.height, c.width))


def init_params(network, rng: Rng, scheme: str = "fan_in_uniform") -> NetworkParams:
    """Fan-in scaled uniform weights and zero biases, deterministic per seed."""
    return network.init_params(rng, scheme)


def value_multilabel(
    params: NetworkParams,
    config: MultiLabelValueNetConfig,
    x: np.ndarray,
    y: np.ndarray,
    mode: str = "eval",
    rng: Optional[Rng] = None,
) -> np.ndarray:
    return MultiLabelValueNet(config).value(params, x, y, mode, rng)


def value_grid(
    params: NetworkParams,
    config: ConvValueNetConfig,
    x: np.ndarray,
    y: np.ndarray,
    mode: str = "eval",
    rng: Optional[Rng] = None,
) -> np.ndarray:
    return ConvValueNet(config).value(params, x, y, mode, rng)


def baseline_forward(
    baseline: IndependentBaseline, params: NetworkParams, x: np.ndarray
) -> np.ndarray:
    """Independent per-dimension probabilities in (0, 1)."""
    return baseline.probabilities(params, x)
