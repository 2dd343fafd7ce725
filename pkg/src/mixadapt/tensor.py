"""Dense f64 tensors with reverse-mode automatic differentiation.

The engine is deliberately small: a define-by-run :class:`Tape` records each
operation together with vector-Jacobian closures for its parents, and
:func:`backward` replays the records in reverse to accumulate gradients for
every tracked leaf. Tapes are rebuilt per minibatch and consumed by exactly
one backward pass.

Tensors are immutable values: the backing numpy buffer is copied on creation
and marked read-only. Constants (``tape is None``) can mix freely with
tracked tensors; an operation is recorded whenever at least one input is
tracked.

Broadcasting is intentionally narrow. Two shapes are compatible when they
are equal, when one operand is a scalar, or when the lower-rank shape equals
the trailing dimensions of the higher-rank one (the bias-add case). Anything
else, including same-rank shapes that numpy would happily broadcast through
size-1 axes, is a :class:`~mixadapt.errors.ShapeError`.
"""

from __future__ import annotations

from typing import Callable, Iterable

import numpy as np

from .errors import DataDomainError, ShapeError, TapeError

Array = np.ndarray
_LOG_2PI = float(np.log(2.0 * np.pi))


def _as_array(values) -> Array:
    arr = np.array(values, dtype=np.float64)
    arr.setflags(write=False)
    return arr


class Tensor:
    """Immutable dense array, optionally tracked on a gradient tape."""

    __slots__ = ("data", "tape", "node_id")

    def __init__(self, values, tape: "Tape | None" = None, node_id: int | None = None):
        if (tape is None) != (node_id is None):
            raise TapeError("a tracked tensor needs both a tape and a node id")
        self.data = _as_array(values)
        self.tape = tape
        self.node_id = node_id

    @classmethod
    def _wrap(cls, data: Array, tape: "Tape | None" = None, node_id: int | None = None) -> "Tensor":
        # Zero-copy path for arrays the engine just created and owns.
        out = cls.__new__(cls)
        data = np.asarray(data, dtype=np.float64)
        data.setflags(write=False)
        out.data = data
        out.tape = tape
        out.node_id = node_id
        return out

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def tracked(self) -> bool:
        return self.tape is not None

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(()))

    def __repr__(self) -> str:
        tag = f" node={self.node_id}" if self.tracked else ""
        return f"Tensor(shape={self.shape}{tag})"

    # Operator sugar; scalars are promoted to constants.
    def __add__(self, other):
        return add(self, _coerce(other))

    def __radd__(self, other):
        return add(_coerce(other), self)

    def __sub__(self, other):
        return sub(self, _coerce(other))

    def __rsub__(self, other):
        return sub(_coerce(other), self)

    def __mul__(self, other):
        return mul(self, _coerce(other))

    def __rmul__(self, other):
        return mul(_coerce(other), self)

    def __matmul__(self, other):
        return matmul(self, _coerce(other))

    def __neg__(self):
        return neg(self)


def constant(values) -> Tensor:
    """Wrap values as an untracked tensor."""
    return Tensor(values)


def _coerce(value) -> Tensor:
    return value if isinstance(value, Tensor) else constant(value)


def as_tensor(value) -> Tensor:
    """Pass tensors through unchanged, wrap anything else as a constant."""
    return _coerce(value)


def detach(t: Tensor) -> Tensor:
    """Return a constant sharing ``t``'s values; gradients stop here."""
    return Tensor(t.data)


class Tape:
    """Ordered record of operations; consumed by one backward pass."""

    __slots__ = ("_records", "_leaves", "_next_id", "_spent")

    def __init__(self):
        self._records: list[tuple[int, list[tuple[int, Callable[[Array], Array]]]]] = []
        self._leaves: dict[int, tuple[int, ...]] = {}
        self._next_id = 0
        self._spent = False

    def _fresh_id(self) -> int:
        nid = self._next_id
        self._next_id += 1
        return nid

    def leaf(self, values) -> Tensor:
        """Create a tracked leaf (a parameter or input that wants gradients)."""
        nid = self._fresh_id()
        t = Tensor(values, self, nid)
        self._leaves[nid] = t.shape
        return t

    @property
    def num_leaves(self) -> int:
        return len(self._leaves)


def _record(data: Array, parents: Iterable[tuple[Tensor, Callable[[Array], Array]]]) -> Tensor:
    tape = None
    tracked = []
    for parent, vjp in parents:
        if parent.tape is None:
            continue
        if tape is None:
            tape = parent.tape
        elif tape is not parent.tape:
            raise TapeError("operands were recorded on different tapes")
        tracked.append((parent.node_id, vjp))
    if tape is None:
        return Tensor._wrap(data)
    out = Tensor._wrap(data, tape, tape._fresh_id())
    tape._records.append((out.node_id, tracked))
    return out


def _broadcast_shape(sa: tuple[int, ...], sb: tuple[int, ...]) -> tuple[int, ...]:
    if sa == sb:
        return sa
    if sa == ():
        return sb
    if sb == ():
        return sa
    if len(sa) == len(sb):
        raise ShapeError(f"shapes {sa} and {sb} do not match and neither is a scalar")
    short, long_ = (sa, sb) if len(sa) < len(sb) else (sb, sa)
    if long_[len(long_) - len(short):] != short:
        raise ShapeError(f"shape {short} is not a trailing slice of {long_}")
    return long_


def _unbroadcast(grad: Array, shape: tuple[int, ...]) -> Array:
    """Sum ``grad`` over the axes that were added by broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    reduced = grad.sum(axis=tuple(range(extra)))
    return reduced.reshape(shape)


def _binary(a: Tensor, b: Tensor, forward, vjp_a, vjp_b) -> Tensor:
    _broadcast_shape(a.shape, b.shape)
    data = forward(a.data, b.data)
    return _record(data, [
        (a, lambda g: _unbroadcast(vjp_a(g), a.shape)),
        (b, lambda g: _unbroadcast(vjp_b(g), b.shape)),
    ])


def add(a: Tensor, b: Tensor) -> Tensor:
    return _binary(a, b, np.add, lambda g: g, lambda g: g)


def sub(a: Tensor, b: Tensor) -> Tensor:
    return _binary(a, b, np.subtract, lambda g: g, lambda g: -g)


def mul(a: Tensor, b: Tensor) -> Tensor:
    ad, bd = a.data, b.data
    return _binary(a, b, np.multiply, lambda g: g * bd, lambda g: g * ad)


def neg(a: Tensor) -> Tensor:
    return _record(-a.data, [(a, lambda g: -g)])


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return _record(out, [(a, lambda g: g * out)])


def log(a: Tensor) -> Tensor:
    if np.any(a.data <= 0.0):
        worst = float(a.data.min())
        raise DataDomainError(f"log requires strictly positive entries, min entry is {worst}")
    ad = a.data
    return _record(np.log(ad), [(a, lambda g: g / ad)])


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return _record(out, [(a, lambda g: g * (1.0 - out * out))])


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0.0
    return _record(np.where(mask, a.data, 0.0), [(a, lambda g: g * mask)])


def square(a: Tensor) -> Tensor:
    ad = a.data
    return _record(ad * ad, [(a, lambda g: g * (2.0 * ad))])


def _sigmoid(x: Array) -> Array:
    out = np.empty_like(x)
    pos = x >= 0.0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softplus(a: Tensor) -> Tensor:
    ad = a.data
    return _record(np.logaddexp(0.0, ad), [(a, lambda g: g * _sigmoid(ad))])


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError(f"matmul needs two rank-2 tensors, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner dimensions differ: {a.shape} x {b.shape}")
    ad, bd = a.data, b.data
    return _record(ad @ bd, [
        (a, lambda g: g @ bd.T),
        (b, lambda g: ad.T @ g),
    ])


def _check_axis(axis: int, rank: int) -> int:
    if not -rank <= axis < rank:
        raise ShapeError(f"axis {axis} is out of range for rank {rank}")
    return axis % rank if rank else 0


def tensor_sum(a: Tensor, axis: int | None = None) -> Tensor:
    if axis is None:
        shape = a.shape
        return _record(np.asarray(a.data.sum()), [(a, lambda g: np.broadcast_to(g, shape).copy())])
    ax = _check_axis(axis, a.data.ndim)
    shape = a.shape
    out = a.data.sum(axis=ax)

    def vjp(g: Array) -> Array:
        return np.broadcast_to(np.expand_dims(g, ax), shape).copy()

    return _record(out, [(a, vjp)])


def tensor_mean(a: Tensor, axis: int | None = None) -> Tensor:
    if axis is None:
        n = a.data.size
        shape = a.shape
        return _record(np.asarray(a.data.mean()),
                       [(a, lambda g: np.broadcast_to(g / n, shape).copy())])
    ax = _check_axis(axis, a.data.ndim)
    n = a.shape[ax]
    shape = a.shape
    out = a.data.mean(axis=ax)

    def vjp(g: Array) -> Array:
        return np.broadcast_to(np.expand_dims(g, ax) / n, shape).copy()

    return _record(out, [(a, vjp)])


def log_softmax(a: Tensor) -> Tensor:
    """Log-probabilities over the last axis, stabilised by max subtraction."""
    if a.data.ndim < 1:
        raise ShapeError("log_softmax needs at least one axis")
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    out = shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    soft = np.exp(out)

    def vjp(g: Array) -> Array:
        return g - soft * g.sum(axis=-1, keepdims=True)

    return _record(out, [(a, vjp)])


def gather_rows(a: Tensor, indices) -> Tensor:
    """Select rows of a rank-2 tensor; gradients scatter-add back."""
    if a.data.ndim != 2:
        raise ShapeError(f"gather_rows needs a rank-2 tensor, got {a.shape}")
    idx = np.asarray(indices, dtype=np.int64)
    if idx.ndim != 1:
        raise ShapeError(f"gather_rows needs rank-1 indices, got shape {idx.shape}")
    if idx.size and (idx.min() < 0 or idx.max() >= a.shape[0]):
        raise ShapeError(f"row index out of range for {a.shape[0]} rows")
    shape = a.shape

    def vjp(g: Array) -> Array:
        acc = np.zeros(shape)
        np.add.at(acc, idx, g)
        return acc

    return _record(a.data[idx], [(a, vjp)])


def one_hot(indices, depth: int) -> Array:
    """Plain numpy one-hot rows; used to build constant targets."""
    idx = np.asarray(indices, dtype=np.int64)
    out = np.zeros((idx.size, depth))
    out[np.arange(idx.size), idx] = 1.0
    return out


def backward(loss: Tensor) -> dict[int, Tensor]:
    """Accumulate gradients of a scalar loss for every leaf of its tape.

    Returns a map from leaf node-id to a gradient tensor of the leaf's
    shape; leaves the loss never touched get zeros. The tape is spent
    afterwards: a second backward on the same tape raises.
    """
    if loss.tape is None:
        raise TapeError("loss is a constant; nothing was recorded")
    if loss.data.size != 1:
        raise TapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    tape = loss.tape
    if tape._spent:
        raise TapeError("this tape was already consumed by a backward pass; "
                        "rebuild the graph before differentiating again")
    tape._spent = True

    partials: dict[int, Array] = {loss.node_id: np.ones_like(loss.data)}
    for out_id, parents in reversed(tape._records):
        g = partials.pop(out_id, None)
        if g is None:
            continue
        for pid, vjp in parents:
            contrib = vjp(g)
            seen = partials.get(pid)
            partials[pid] = contrib if seen is None else seen + contrib

    grads: dict[int, Tensor] = {}
    for nid, shape in tape._leaves.items():
        got = partials.get(nid)
        grads[nid] = Tensor._wrap(got if got is not None else np.zeros(shape))
    return grads
