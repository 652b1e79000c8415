"""Dense tensor primitives with tape-based reverse-mode differentiation.

Values are float64 numpy arrays. A :class:`Tape` records every primitive
applied to its :class:`Var` handles; :meth:`Tape.backward` walks the record
once in reverse and returns gradients for the leaves that were marked with
``requires_grad``. Leaves can be network parameters or network inputs, which
is what lets inference differentiate the value with respect to ``y``.
"""

import logging
from typing import Callable, Dict, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

logger = logging.getLogger(__name__)

# float64 ndarray is the tensor type throughout the package
Tensor = np.ndarray

Operand = Union["Var", np.ndarray, float, int]
VjpFn = Callable[[np.ndarray], Tuple[Optional[np.ndarray], ...]]


class ShapeError(ValueError):
    """Operand shapes are incompatible for a primitive."""

    def __init__(self, primitive: str, *shapes: Tuple[int, ...], detail: str = ""):
        self.primitive = primitive
        self.shapes = shapes
        rendered = " and ".join(str(tuple(s)) for s in shapes)
        message = f"{primitive}: incompatible shapes {rendered}"
        if detail:
            message += f" ({detail})"
        super().__init__(message)


class TapeError(RuntimeError):
    """Misuse of a tape (foreign variable, non-scalar output)."""


def as_tensor(value) -> Tensor:
    """Convert to a float64 array, copying so callers cannot alias tape values."""
    return np.array(value, dtype=np.float64)


class _Node(NamedTuple):
    parents: Tuple[int, ...]
    vjp: Optional[VjpFn]


class Var:
    """Handle to a value recorded on a tape."""

    __slots__ = ("tape", "index", "value")
    # make numpy operands defer to the reflected operators below
    __array_ufunc__ = None

    def __init__(self, tape: "Tape", index: int, value: np.ndarray):
        self.tape = tape
        self.index = index
        self.value = value

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.value.shape

    @property
    def requires_grad(self) -> bool:
        return self.tape._requires[self.index]

    def __repr__(self) -> str:
        return f"Var(index={self.index}, shape={self.shape})"

    def __add__(self, other: Operand) -> "Var":
        return add(self, other)

    def __radd__(self, other: Operand) -> "Var":
        return add(other, self)

    def __sub__(self, other: Operand) -> "Var":
        return sub(self, other)

    def __rsub__(self, other: Operand) -> "Var":
        return sub(other, self)

    def __mul__(self, other: Operand) -> "Var":
        return mul(self, other)

    def __rmul__(self, other: Operand) -> "Var":
        return mul(other, self)

    def __truediv__(self, other: Operand) -> "Var":
        return div(self, other)

    def __rtruediv__(self, other: Operand) -> "Var":
        return div(other, self)

    def __neg__(self) -> "Var":
        return neg(self)

    def __matmul__(self, other: Operand) -> "Var":
        return matmul(self, other)


class Tape:
    """Append-only record of primitive operations.

    A tape belongs to one caller while it records; use one tape per forward
    pass.
    """

    def __init__(self):
        self._values: List[np.ndarray] = []
        self._nodes: List[_Node] = []
        self._requires: List[bool] = []
        self._marked: List[int] = []

    def __len__(self) -> int:
        return len(self._nodes)

    def leaf(self, value, requires_grad: bool = True) -> Var:
        """Record an input value, optionally as a differentiation target."""
        array = as_tensor(value)
        var = self._append(array, (), None, requires_grad)
        if requires_grad:
            self._marked.append(var.index)
        return var

    def constant(self, value) -> Var:
        return self.leaf(value, requires_grad=False)

    def lift(self, operand: Operand) -> Var:
        if isinstance(operand, Var):
            if operand.tape is not self:
                raise TapeError("variable belongs to a different tape")
            return operand
        return self.constant(operand)

    def record(self, value: np.ndarray, parents: Sequence[Var], vjp: VjpFn) -> Var:
        """Append the result of a primitive whose inputs are ``parents``."""
        requires = any(self._requires[p.index] for p in parents)
        return self._append(
            value, tuple(p.index for p in parents), vjp if requires else None, requires
        )

    def _append(
        self, value: np.ndarray, parents: Tuple[int, ...], vjp: Optional[VjpFn], requires: bool
    ) -> Var:
        index = len(self._nodes)
        self._values.append(value)
        self._nodes.append(_Node(parents, vjp))
        self._requires.append(requires)
        return Var(self, index, value)

    def backward(self, output: Var) -> Dict[int, Tensor]:
        """Gradients of a scalar output with respect to every marked leaf.

        Returns a map from leaf index (``Var.index``) to a gradient array of
        the leaf's shape. Leaves not marked with ``requires_grad`` are absent.
        """
        if not isinstance(output, Var) or output.tape is not self:
            raise TapeError("backward output was not recorded on this tape")
        if output.value.size != 1:
            raise TapeError(f"backward needs a scalar output, got shape {output.shape}")

        grads: List[Optional[np.ndarray]] = [None] * (output.index + 1)
        grads[output.index] = np.ones_like(output.value)
        for index in range(output.index, -1, -1):
            grad = grads[index]
            node = self._nodes[index]
            if grad is None or node.vjp is None:
                continue
            for parent, parent_grad in zip(node.parents, node.vjp(grad)):
                if parent_grad is None or not self._requires[parent]:
                    continue
                if grads[parent] is None:
                    grads[parent] = parent_grad
                else:
                    grads[parent] = grads[parent] + parent_grad

        result: Dict[int, Tensor] = {}
        for index in self._marked:
            grad = grads[index] if index <= output.index else None
            if grad is None:
                grad = np.zeros_like(self._values[index])
            result[index] = np.array(grad, dtype=np.float64).reshape(self._values[index].shape)
        return result


def _lift(*operands: Operand) -> Tuple[Tape, List[Var]]:
    tape = next((op.tape for op in operands if isinstance(op, Var)), None)
    if tape is None:
        raise TapeError("at least one operand must be a recorded variable")
    return tape, [tape.lift(op) for op in operands]


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_check(primitive: str, a: Var, b: Var) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(primitive, a.shape, b.shape) from None


def add(a: Operand, b: Operand) -> Var:
    tape, (a, b) = _lift(a, b)
    _broadcast_check("add", a, b)
    sa, sb = a.shape, b.shape
    return tape.record(
        a.value + b.value, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb))
    )


def sub(a: Operand, b: Operand) -> Var:
    tape, (a, b) = _lift(a, b)
    _broadcast_check("sub", a, b)
    sa, sb = a.shape, b.shape
    return tape.record(
        a.value - b.value, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb))
    )


def mul(a: Operand, b: Operand) -> Var:
    tape, (a, b) = _lift(a, b)
    _broadcast_check("mul", a, b)
    av, bv = a.value, b.value
    return tape.record(
        av * bv,
        (a, b),
        lambda g: (_unbroadcast(g * bv, av.shape), _unbroadcast(g * av, bv.shape)),
    )


def div(a: Operand, b: Operand) -> Var:
    tape, (a, b) = _lift(a, b)
    _broadcast_check("div", a, b)
    av, bv = a.value, b.value
    return tape.record(
        av / bv,
        (a, b),
        lambda g: (
            _unbroadcast(g / bv, av.shape),
            _unbroadcast(-g * av / (bv * bv), bv.shape),
        ),
    )


def minimum(a: Operand, b: Operand) -> Var:
    """Elementwise min; at ties the gradient goes to ``a``."""
    tape, (a, b) = _lift(a, b)
    _broadcast_check("minimum", a, b)
    av, bv = a.value, b.value
    a_wins = av <= bv
    return tape.record(
        np.where(a_wins, av, bv),
        (a, b),
        lambda g: (_unbroadcast(g * a_wins, av.shape), _unbroadcast(g * ~a_wins, bv.shape)),
    )


def maximum(a: Operand, b: Operand) -> Var:
    """Elementwise max; at ties the gradient goes to ``a``."""
    tape, (a, b) = _lift(a, b)
    _broadcast_check("maximum", a, b)
    av, bv = a.value, b.value
    a_wins = av >= bv
    return tape.record(
        np.where(a_wins, av, bv),
        (a, b),
        lambda g: (_unbroadcast(g * a_wins, av.shape), _unbroadcast(g * ~a_wins, bv.shape)),
    )


def matmul(a: Operand, b: Operand) -> Var:
    """Matrix product of two 2-D operands."""
    tape, (a, b) = _lift(a, b)
    if a.value.ndim != 2 or b.value.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError("matmul", a.shape, b.shape)
    av, bv = a.value, b.value
    return tape.record(av @ bv, (a, b), lambda g: (g @ bv.T, av.T @ g))


def neg(x: Var) -> Var:
    return x.tape.record(-x.value, (x,), lambda g: (-g,))


def square(x: Var) -> Var:
    xv = x.value
    return x.tape.record(xv * xv, (x,), lambda g: (2.0 * g * xv,))


def exp(x: Var) -> Var:
    out = np.exp(x.value)
    return x.tape.record(out, (x,), lambda g: (g * out,))


def log(x: Var) -> Var:
    xv = x.value
    return x.tape.record(np.log(xv), (x,), lambda g: (g / xv,))


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def sigmoid(x: Var) -> Var:
    out = _sigmoid(x.value)
    return x.tape.record(out, (x,), lambda g: (g * out * (1.0 - out),))


def softplus(x: Var) -> Var:
    """ln(1 + e^z), computed without overflow."""
    xv = x.value
    return x.tape.record(np.logaddexp(0.0, xv), (x,), lambda g: (g * _sigmoid(xv),))


def relu(x: Var) -> Var:
    active = x.value > 0.0
    return x.tape.record(np.where(active, x.value, 0.0), (x,), lambda g: (g * active,))


def clamp(x: Var, low: float, high: float) -> Var:
    xv = x.value
    inside = (xv >= low) & (xv <= high)
    return x.tape.record(np.clip(xv, low, high), (x,), lambda g: (g * inside,))


def sum(x: Var, axis: Optional[Union[int, Tuple[int, ...]]] = None) -> Var:  # noqa: A001
    shape = x.shape

    def vjp(g: np.ndarray) -> Tuple[np.ndarray]:
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return x.tape.record(np.sum(x.value, axis=axis), (x,), vjp)


def mean(x: Var, axis: Optional[Union[int, Tuple[int, ...]]] = None) -> Var:
    count = x.value.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    return sum(x, axis) * (1.0 / float(count))


def reshape(x: Var, shape: Tuple[int, ...]) -> Var:
    original = x.shape
    try:
        out = x.value.reshape(shape)
    except ValueError:
        raise ShapeError("reshape", original, tuple(shape)) from None
    return x.tape.record(out, (x,), lambda g: (g.reshape(original),))


def concat(parts: Sequence[Operand], axis: int = -1) -> Var:
    tape, parts = _lift(*parts)
    try:
        out = np.concatenate([p.value for p in parts], axis=axis)
    except ValueError:
        raise ShapeError("concat", *(p.shape for p in parts)) from None
    bounds = np.cumsum([p.shape[axis] for p in parts])[:-1]
    return tape.record(out, parts, lambda g: tuple(np.split(g, bounds, axis=axis)))


def dropout(x: Var, mask: np.ndarray, keep_prob: float) -> Var:
    """Inverted dropout with a pre-sampled binary mask."""
    if mask.shape != x.shape:
        raise ShapeError("dropout", x.shape, mask.shape)
    scale = mask / keep_prob
    return x.tape.record(x.value * scale, (x,), lambda g: (g * scale,))


def same_padding(size: int, kernel: int, stride: int) -> Tuple[int, int, int]:
    """Output size and (before, after) zero padding for "same" convolution."""
    out = -(-size // stride)
    total = max((out - 1) * stride + kernel - size, 0)
    return out, total // 2, total - total // 2


def conv2d(x: Operand, kernel: Operand, stride: int = 1) -> Var:
    """2-D convolution with zero "same" padding.

    ``x`` is ``[batch, height, width, in_channels]``, ``kernel`` is
    ``[k, k, in_channels, out_channels]``; the output has
    ``ceil(height / stride)`` rows.
    """
    tape, (x, kernel) = _lift(x, kernel)
    xs, ks = x.shape, kernel.shape
    if len(xs) != 4 or len(ks) != 4 or ks[0] != ks[1] or xs[3] != ks[2]:
        raise ShapeError("conv2d", xs, ks)
    k = ks[0]
    _, height, width, _ = xs
    out_h, top, bottom = same_padding(height, k, stride)
    out_w, left, right = same_padding(width, k, stride)

    padded = np.pad(x.value, ((0, 0), (top, bottom), (left, right), (0, 0)))
    # [batch, out_h, out_w, in_channels, k, k]
    windows = sliding_window_view(padded, (k, k), axis=(1, 2))[:, ::stride, ::stride]
    windows = windows[:, :out_h, :out_w]
    kernel_t = kernel.value.transpose(2, 0, 1, 3)
    out = np.tensordot(windows, kernel_t, axes=([3, 4, 5], [0, 1, 2]))

    def vjp(g: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        grad_kernel = np.tensordot(windows, g, axes=([0, 1, 2], [0, 1, 2])).transpose(1, 2, 0, 3)
        grad_windows = np.tensordot(g, kernel_t, axes=([3], [3]))
        grad_padded = np.zeros_like(padded)
        for i in range(k):
            for j in range(k):
                grad_padded[
                    :, i : i + stride * out_h : stride, j : j + stride * out_w : stride, :
                ] += grad_windows[..., i, j]
        return grad_padded[:, top : top + height, left : left + width, :], grad_kernel

    return tape.record(out, (x, kernel), vjp)
