"""
Dense float32 tensors with a reverse-mode gradient tape.

Each differentiable operation stamps its output with a TapeEntry carrying a
global execution sequence number. backward() collects the entries reachable
from a scalar loss into a GradTape, ordered by that sequence, and replays it
in exact reverse order.

Conventions:
- data is a contiguous row-major float32 array; no strided views are kept.
- every forward result is checked for NaN/Inf and raises NumericError.
- relu-style gradients at exactly 0 are 0.
- gradients of broadcast operands are summed back to the operand shape.
"""

from __future__ import annotations

import itertools
from collections.abc import Callable, Iterator, Sequence
from contextlib import contextmanager
from contextvars import ContextVar
from dataclasses import dataclass
from typing import Any, Union

import numpy as np

from atoms.errors import ContractError, DimensionError, NumericError

DTYPE = np.float32
LOG_CLAMP = 1e-12

_SEQUENCE = itertools.count()
_grad_enabled: ContextVar[bool] = ContextVar("grad_enabled", default=True)

Grads = Sequence["np.ndarray | None"]
BackwardFn = Callable[[np.ndarray], Grads]
Operand = Union["Tensor", np.ndarray, float, int]


@dataclass(frozen=True, eq=False)
class TapeEntry:
    """One executed differentiable operation."""
    seq: int
    op: str
    inputs: tuple[Tensor, ...]
    backward: BackwardFn


@dataclass(frozen=True)
class GradTape:
    """Operations reachable from a loss, in execution order."""
    records: tuple[tuple[Tensor, TapeEntry], ...]
    tensors: tuple[Tensor, ...]

    @classmethod
    def collect(cls, loss: Tensor) -> GradTape:
        seen: set[int] = set()
        visited: list[Tensor] = []
        records: list[tuple[Tensor, TapeEntry]] = []
        stack = [loss]
        while stack:
            tensor = stack.pop()
            if id(tensor) in seen:
                continue
            seen.add(id(tensor))
            visited.append(tensor)
            entry = tensor._entry
            if entry is not None:
                records.append((tensor, entry))
                stack.extend(entry.inputs)
        records.sort(key=lambda record: record[1].seq)
        return cls(records=tuple(records), tensors=tuple(visited))

    @property
    def ops(self) -> list[str]:
        return [entry.op for _, entry in self.records]

    def __len__(self) -> int:
        return len(self.records)


def is_grad_enabled() -> bool:
    return _grad_enabled.get()


@contextmanager
def no_grad() -> Iterator[None]:
    """Run operations without recording them on the tape."""
    token = _grad_enabled.set(False)
    try:
        yield
    finally:
        _grad_enabled.reset(token)


class Tensor:
    """A float32 array that can take part in reverse-mode differentiation."""

    __slots__ = ("data", "requires_grad", "grad", "name", "_entry")
    __array_priority__ = 100

    def __init__(
        self,
        data: Any,
        requires_grad: bool = False,
        name: str | None = None,
    ) -> None:
        if isinstance(data, Tensor):
            data = data.data
        self.data: np.ndarray = np.ascontiguousarray(np.asarray(data, dtype=DTYPE))
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.name = name
        self._entry: TapeEntry | None = None

    # -- construction -----------------------------------------------------

    @classmethod
    def zeros(cls, *shape: int, requires_grad: bool = False,
              name: str | None = None) -> Tensor:
        return cls(np.zeros(shape, dtype=DTYPE), requires_grad, name)

    @classmethod
    def ones(cls, *shape: int, requires_grad: bool = False,
             name: str | None = None) -> Tensor:
        return cls(np.ones(shape, dtype=DTYPE), requires_grad, name)

    # -- introspection ----------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.data.shape)

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    @property
    def on_tape(self) -> bool:
        return self._entry is not None

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() needs a single element, got {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def detach(self) -> Tensor:
        return Tensor(self.data.copy(), name=self.name)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        label = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{label})"

    def __len__(self) -> int:
        return self.shape[0]

    # -- operators --------------------------------------------------------

    def __add__(self, other: Operand) -> Tensor:
        return add(self, other)

    def __radd__(self, other: Operand) -> Tensor:
        return add(other, self)

    def __sub__(self, other: Operand) -> Tensor:
        return subtract(self, other)

    def __rsub__(self, other: Operand) -> Tensor:
        return subtract(other, self)

    def __mul__(self, other: Operand) -> Tensor:
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return hadamard(self, other)

    def __rmul__(self, other: Operand) -> Tensor:
        return self.__mul__(other)

    def __truediv__(self, other: Operand) -> Tensor:
        if isinstance(other, (int, float)):
            return scale(self, 1.0 / float(other))
        return divide(self, other)

    def __neg__(self) -> Tensor:
        return scale(self, -1.0)

    def __matmul__(self, other: Tensor) -> Tensor:
        return matmul(self, other)

    def __pow__(self, exponent: float) -> Tensor:
        return power(self, exponent)

    def __getitem__(self, index: Any) -> Tensor:
        return take(self, index)

    # -- method forms -----------------------------------------------------

    @property
    def T(self) -> Tensor:
        return transpose(self)

    def transpose(self, axes: Sequence[int] | None = None) -> Tensor:
        return transpose(self, axes)

    def reshape(self, *shape: int) -> Tensor:
        return reshape(self, shape)

    def sum(self, axis: int | tuple[int, ...] | None = None,
            keepdims: bool = False) -> Tensor:
        return reduce_sum(self, axis, keepdims)

    def mean(self, axis: int | tuple[int, ...] | None = None,
             keepdims: bool = False) -> Tensor:
        return reduce_mean(self, axis, keepdims)

    def relu(self) -> Tensor:
        return relu(self)

    def exp(self) -> Tensor:
        return exp(self)

    def log(self) -> Tensor:
        return log(self)

    def sigmoid(self) -> Tensor:
        return sigmoid(self)

    def softmax(self) -> Tensor:
        return softmax_rows(self)


# =============================================================================
# RECORDING
# =============================================================================

def as_tensor(value: Operand) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _record(op: str, data: np.ndarray, inputs: Sequence[Tensor],
            backward_fn: BackwardFn) -> Tensor:
    data = np.asarray(data, dtype=DTYPE)
    if not np.isfinite(data).all():
        raise NumericError(f"{op} produced non-finite values")
    out = Tensor(data)
    if _grad_enabled.get() and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        out._entry = TapeEntry(next(_SEQUENCE), op, tuple(inputs), backward_fn)
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, dim in enumerate(shape) if dim == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def backward(loss: Tensor, *, accumulate: bool = False) -> GradTape:
    """
    Populate .grad on every requires_grad ancestor of a scalar loss.

    Gradients overwrite what a previous backward left behind unless
    accumulate is set. Frozen tensors never receive a gradient.
    """
    if loss.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise ContractError("loss is not on the gradient tape")

    tape = GradTape.collect(loss)
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for output, entry in reversed(tape.records):
        upstream = grads.get(id(output))
        if upstream is None:
            continue
        for tensor, grad in zip(entry.inputs, entry.backward(upstream)):
            if grad is None or not tensor.requires_grad:
                continue
            grad = _unbroadcast(np.asarray(grad, dtype=DTYPE), tensor.shape)
            previous = grads.get(id(tensor))
            grads[id(tensor)] = grad if previous is None else previous + grad

    for tensor in tape.tensors:
        if not tensor.requires_grad:
            continue
        grad = grads.get(id(tensor))
        if grad is None:
            grad = np.zeros_like(tensor.data)
        if accumulate and tensor.grad is not None:
            tensor.grad = tensor.grad + grad
        else:
            tensor.grad = np.ascontiguousarray(grad, dtype=DTYPE)
    return tape


# =============================================================================
# ELEMENTWISE
# =============================================================================

def add(a: Operand, b: Operand) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _record("add", a.data + b.data, (a, b), lambda g: (g, g))


def subtract(a: Operand, b: Operand) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _record("subtract", a.data - b.data, (a, b), lambda g: (g, -g))


def hadamard(a: Operand, b: Operand) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _record(
        "hadamard", a.data * b.data, (a, b), lambda g: (g * b.data, g * a.data)
    )


def divide(a: Operand, b: Operand) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if not np.all(b.data != 0):
        raise NumericError("division by zero")
    return _record(
        "divide",
        a.data / b.data,
        (a, b),
        lambda g: (g / b.data, -g * a.data / (b.data * b.data)),
    )


def scale(a: Tensor, factor: float) -> Tensor:
    return _record("scale", a.data * DTYPE(factor), (a,), lambda g: (g * DTYPE(factor),))


def power(a: Tensor, exponent: float) -> Tensor:
    out = np.power(a.data, exponent)
    return _record(
        "power",
        out,
        (a,),
        lambda g: (g * exponent * np.power(a.data, exponent - 1),),
    )


def relu(a: Tensor) -> Tensor:
    active = a.data > 0
    return _record("relu", np.where(active, a.data, 0), (a,), lambda g: (g * active,))


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return _record("exp", out, (a,), lambda g: (g * out,))


def log(a: Tensor) -> Tensor:
    """Natural log with the input clamped at 1e-12."""
    clamped = np.maximum(a.data, LOG_CLAMP)
    inside = a.data > LOG_CLAMP
    return _record("log", np.log(clamped), (a,), lambda g: (g * inside / clamped,))


def sigmoid(a: Tensor) -> Tensor:
    out = 0.5 * (1.0 + np.tanh(0.5 * a.data))
    return _record("sigmoid", out, (a,), lambda g: (g * out * (1.0 - out),))


def softmax_rows(x: Tensor) -> Tensor:
    """Softmax over the last axis with max subtraction."""
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    weights = np.exp(shifted)
    out = weights / weights.sum(axis=-1, keepdims=True)

    def _backward(g: np.ndarray) -> Grads:
        inner = (g * out).sum(axis=-1, keepdims=True)
        return (out * (g - inner),)

    return _record("softmax_rows", out, (x,), _backward)


# =============================================================================
# LINEAR ALGEBRA AND SHAPE
# =============================================================================

def _swap_last(array: np.ndarray) -> np.ndarray:
    return np.swapaxes(array, -1, -2)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product over the last two axes; leading axes broadcast."""
    if a.ndim < 2 or b.ndim < 2:
        raise DimensionError(f"matmul needs matrices, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul inner dimensions differ: {a.shape} @ {b.shape}")
    out = np.matmul(a.data, b.data)
    return _record(
        "matmul",
        out,
        (a, b),
        lambda g: (np.matmul(g, _swap_last(b.data)), np.matmul(_swap_last(a.data), g)),
    )


def transpose(a: Tensor, axes: Sequence[int] | None = None) -> Tensor:
    """Swap the last two axes, or apply an explicit permutation."""
    if axes is None:
        if a.ndim < 2:
            raise DimensionError(f"transpose needs at least 2 axes, got {a.shape}")
        order = list(range(a.ndim))
        order[-1], order[-2] = order[-2], order[-1]
    else:
        order = list(axes)
        if sorted(order) != list(range(a.ndim)):
            raise DimensionError(f"invalid permutation {order} for shape {a.shape}")
    inverse = np.argsort(order)
    return _record(
        "transpose",
        np.transpose(a.data, order),
        (a,),
        lambda g: (np.transpose(g, inverse),),
    )


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    try:
        out = a.data.reshape(tuple(shape))
    except ValueError as exc:
        raise DimensionError(f"cannot reshape {a.shape} to {tuple(shape)}") from exc
    return _record("reshape", out, (a,), lambda g: (g.reshape(a.shape),))


def take(a: Tensor, index: Any) -> Tensor:
    """Indexing with gradients scattered back into a zero buffer."""
    out = a.data[index]
    parts = index if isinstance(index, tuple) else (index,)
    basic = all(
        part is None or part is Ellipsis or isinstance(part, (int, np.integer, slice))
        for part in parts
    )

    def _backward(g: np.ndarray) -> Grads:
        full = np.zeros_like(a.data)
        if basic:
            full[index] = g
        else:
            np.add.at(full, index, g)
        return (full,)

    return _record("take", np.array(out, dtype=DTYPE), (a,), _backward)


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    if not tensors:
        raise ContractError("concat needs at least one tensor")
    parts = [as_tensor(t) for t in tensors]
    try:
        out = np.concatenate([t.data for t in parts], axis=axis)
    except ValueError as exc:
        raise DimensionError(str(exc)) from exc
    splits = np.cumsum([t.shape[axis] for t in parts])[:-1]
    return _record(
        "concat", out, parts, lambda g: tuple(np.split(g, splits, axis=axis))
    )


def reduce_sum(a: Tensor, axis: int | tuple[int, ...] | None = None,
               keepdims: bool = False) -> Tensor:
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def _backward(g: np.ndarray) -> Grads:
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape),)

    return _record("sum", out, (a,), _backward)


def reduce_mean(a: Tensor, axis: int | tuple[int, ...] | None = None,
                keepdims: bool = False) -> Tensor:
    if axis is None:
        count = a.size
    else:
        axes = (axis,) if isinstance(axis, int) else axis
        count = int(np.prod([a.shape[i] for i in axes]))
    return scale(reduce_sum(a, axis, keepdims), 1.0 / count)


# =============================================================================
# COMPOSITES
# =============================================================================

def layer_norm(x: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean and unit variance (no affine)."""
    centered = x - x.mean(axis=-1, keepdims=True)
    variance = (centered * centered).mean(axis=-1, keepdims=True)
    return centered * power(variance + eps, -0.5)


def gaussian_sample(mu: Tensor, logvar: Tensor, noise: np.ndarray) -> Tensor:
    """Reparameterized draw mu + exp(logvar / 2) * noise."""
    if noise.shape != mu.shape or mu.shape != logvar.shape:
        raise DimensionError(
            f"mu {mu.shape}, logvar {logvar.shape} and noise {noise.shape} differ"
        )
    return mu + exp(scale(logvar, 0.5)) * Tensor(noise)
