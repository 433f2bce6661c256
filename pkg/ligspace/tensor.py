"""Dense tensors with reverse-mode differentiation.

A :class:`Tensor` wraps a contiguous numpy array.  Operations executed while
gradient recording is enabled append an entry to the active :class:`Tape`;
:func:`backward` walks that tape in exact reverse order and leaves gradients
on every leaf tensor created with ``requires_grad=True``.

Broadcasting is limited to leading batch dimensions: two operands combine
when their shapes are equal or when one shape is a suffix of the other.
"""

from __future__ import annotations

import threading
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Callable, Iterator, Sequence

import numpy as np

from ligspace.errors import NonFiniteError, ShapeError, TapeError

GradFn = Callable[[np.ndarray], Sequence["np.ndarray | None"]]

_FLOAT_TYPES = (np.float32, np.float64)


# ---------------------------------------------------------------------------
# Tape
# ---------------------------------------------------------------------------

@dataclass
class TapeEntry:
    """One executed operation and what its backward rule needs."""

    op: str
    inputs: tuple["Tensor", ...]
    output: "Tensor"
    backward: GradFn


class Tape:
    """Ordered record of executed operations."""

    def __init__(self) -> None:
        self.entries: list[TapeEntry] = []
        self.consumed = False

    def __len__(self) -> int:
        return len(self.entries)

    def ops(self) -> list[str]:
        return [entry.op for entry in self.entries]


_state = threading.local()


def _grad_enabled() -> bool:
    return getattr(_state, "enabled", True)


def current_tape() -> Tape:
    """Return the tape operations are recorded on, creating it if needed."""
    tape = getattr(_state, "tape", None)
    if tape is None:
        tape = Tape()
        _state.tape = tape
    return tape


def reset_tape() -> None:
    """Drop the active tape; the next recorded op starts a fresh one."""
    _state.tape = None


@contextmanager
def no_grad() -> Iterator[None]:
    """Run the enclosed block without recording operations."""
    previous = _grad_enabled()
    _state.enabled = False
    try:
        yield
    finally:
        _state.enabled = previous


# ---------------------------------------------------------------------------
# Tensor
# ---------------------------------------------------------------------------

class Tensor:
    """Contiguous float array with an optional gradient."""

    __slots__ = ("data", "grad", "requires_grad", "_tape")

    def __init__(self, data, requires_grad: bool = False, dtype=None) -> None:
        if isinstance(data, Tensor):
            data = data.data
        arr = np.array(data, dtype=dtype, copy=True)
        if arr.dtype not in _FLOAT_TYPES:
            arr = arr.astype(np.float64)
        self.data: np.ndarray = np.asarray(arr, order="C")
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._tape: Tape | None = None

    @classmethod
    def _wrap(cls, arr: np.ndarray) -> "Tensor":
        out = cls.__new__(cls)
        out.data = np.asarray(arr, order="C")
        out.grad = None
        out.requires_grad = False
        out._tape = None
        return out

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}{flag})"

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        if self.size != 1:
            raise ShapeError(f"item() needs a single element, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def detach(self) -> "Tensor":
        return Tensor._wrap(self.data.copy())

    def astype(self, dtype) -> "Tensor":
        return Tensor(self.data, requires_grad=self.requires_grad, dtype=dtype)

    def zero_grad(self) -> None:
        self.grad = None

    # operators -------------------------------------------------------------

    def __add__(self, other) -> "Tensor":
        return add(self, other)

    def __radd__(self, other) -> "Tensor":
        return add(other, self)

    def __sub__(self, other) -> "Tensor":
        return sub(self, other)

    def __rsub__(self, other) -> "Tensor":
        return sub(other, self)

    def __mul__(self, other) -> "Tensor":
        return mul(self, other)

    def __rmul__(self, other) -> "Tensor":
        return mul(other, self)

    def __truediv__(self, other) -> "Tensor":
        return div(self, other)

    def __rtruediv__(self, other) -> "Tensor":
        return div(other, self)

    def __matmul__(self, other) -> "Tensor":
        return matmul(self, other)

    def __neg__(self) -> "Tensor":
        return neg(self)

    def __getitem__(self, index) -> "Tensor":
        return slice_(self, index)

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        return sum_(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        return mean(self, axis=axis, keepdims=keepdims)

    def exp(self) -> "Tensor":
        return exp(self)

    def log(self) -> "Tensor":
        return log(self)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    @property
    def T(self) -> "Tensor":
        return transpose(self)


def as_tensor(value, like: Tensor | None = None) -> Tensor:
    """Wrap *value* as a constant tensor unless it already is one."""
    if isinstance(value, Tensor):
        return value
    dtype = like.dtype if like is not None else np.float64
    return Tensor._wrap(np.asarray(value, dtype=dtype))


# ---------------------------------------------------------------------------
# Recording helpers
# ---------------------------------------------------------------------------

def _tracked(tensor: Tensor, tape: Tape | None) -> bool:
    return tensor.requires_grad or (tape is not None and tensor._tape is tape)


def _emit(op: str, out: np.ndarray, inputs: tuple[Tensor, ...], backward: GradFn) -> Tensor:
    if not np.all(np.isfinite(out)):
        raise NonFiniteError(f"{op} produced a non-finite value")
    result = Tensor._wrap(out)
    if _grad_enabled():
        tape = getattr(_state, "tape", None)
        if any(_tracked(t, tape) for t in inputs):
            tape = current_tape()
            tape.entries.append(TapeEntry(op, inputs, result, backward))
            result._tape = tape
    return result


def _check_suffix(op: str, a: tuple[int, ...], b: tuple[int, ...]) -> None:
    short, long_ = (a, b) if len(a) <= len(b) else (b, a)
    if long_[len(long_) - len(short):] != short:
        raise ShapeError(f"{op}: shapes {a} and {b} differ beyond leading batch dims")


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    return grad


def _normalize_axis(axis, ndim: int) -> tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(a % ndim for a in axis)


# ---------------------------------------------------------------------------
# Elementwise arithmetic
# ---------------------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _pair(a, b)
    _check_suffix("add", a.shape, b.shape)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _emit("add", a.data + b.data, (a, b), backward)


def sub(a, b) -> Tensor:
    a, b = _pair(a, b)
    _check_suffix("sub", a.shape, b.shape)

    def backward(g):
        return _unbroadcast(g, a.shape), -_unbroadcast(g, b.shape)

    return _emit("sub", a.data - b.data, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = _pair(a, b)
    _check_suffix("mul", a.shape, b.shape)

    def backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _emit("mul", a.data * b.data, (a, b), backward)


def div(a, b) -> Tensor:
    a, b = _pair(a, b)
    _check_suffix("div", a.shape, b.shape)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = a.data / b.data

    def backward(g):
        ga = g / b.data
        gb = -g * a.data / (b.data * b.data)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _emit("div", out, (a, b), backward)


def neg(x: Tensor) -> Tensor:
    return _emit("neg", -x.data, (x,), lambda g: (-g,))


def _pair(a, b) -> tuple[Tensor, Tensor]:
    if isinstance(a, Tensor):
        return a, as_tensor(b, like=a)
    b = as_tensor(b)
    return as_tensor(a, like=b), b


def exp(x: Tensor) -> Tensor:
    with np.errstate(over="ignore"):
        out = np.exp(x.data)
    return _emit("exp", out, (x,), lambda g: (g * out,))


def log(x: Tensor) -> Tensor:
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(x.data)
    return _emit("log", out, (x,), lambda g: (g / x.data,))


def sqrt(x: Tensor) -> Tensor:
    with np.errstate(invalid="ignore"):
        out = np.sqrt(x.data)
    return _emit("sqrt", out, (x,), lambda g: (g * 0.5 / out,))


def sigmoid(x: Tensor) -> Tensor:
    out = 0.5 * (np.tanh(0.5 * x.data) + 1.0)
    return _emit("sigmoid", out, (x,), lambda g: (g * out * (1.0 - out),))


def silu(x: Tensor) -> Tensor:
    sig = 0.5 * (np.tanh(0.5 * x.data) + 1.0)
    out = x.data * sig

    def backward(g):
        return (g * (sig + x.data * sig * (1.0 - sig)),)

    return _emit("silu", out, (x,), backward)


def tanh(x: Tensor) -> Tensor:
    out = np.tanh(x.data)
    return _emit("tanh", out, (x,), lambda g: (g * (1.0 - out * out),))


def scale_rows(x: Tensor, s: Tensor) -> Tensor:
    """Multiply each last-axis row of *x* by the matching entry of *s*.

    ``s`` must have the shape of ``x`` without its last axis, or a suffix of
    that shape.
    """
    s = as_tensor(s, like=x)
    if x.ndim < 1:
        raise ShapeError("scale_rows needs at least one axis")
    _check_suffix("scale_rows", x.shape[:-1], s.shape)
    if s.ndim > x.ndim - 1:
        raise ShapeError(f"scale_rows: scale shape {s.shape} too long for {x.shape}")

    def backward(g):
        gx = g * s.data[..., None]
        gs = _unbroadcast((g * x.data).sum(axis=-1), s.shape)
        return gx, gs

    return _emit("scale_rows", x.data * s.data[..., None], (x, s), backward)


# ---------------------------------------------------------------------------
# Linear algebra and shape
# ---------------------------------------------------------------------------

def _swap(arr: np.ndarray) -> np.ndarray:
    return np.swapaxes(arr, -1, -2)


def matmul(a, b) -> Tensor:
    a, b = _pair(a, b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs rank >= 2 operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: inner dims differ, {a.shape} @ {b.shape}")
    _check_suffix("matmul", a.shape[:-2], b.shape[:-2])

    def backward(g):
        ga = _unbroadcast(g @ _swap(b.data), a.shape)
        gb = _unbroadcast(_swap(a.data) @ g, b.shape)
        return ga, gb

    return _emit("matmul", a.data @ b.data, (a, b), backward)


def transpose(x: Tensor) -> Tensor:
    """Swap the last two axes."""
    if x.ndim < 2:
        raise ShapeError(f"transpose needs rank >= 2, got {x.shape}")
    return _emit("transpose", _swap(x.data), (x,), lambda g: (_swap(g),))


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    try:
        out = x.data.reshape(shape)
    except ValueError as exc:
        raise ShapeError(f"reshape: {exc}") from exc
    return _emit("reshape", out, (x,), lambda g: (g.reshape(x.shape),))


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    if not tensors:
        raise ShapeError("concat needs at least one tensor")
    tensors = tuple(tensors)
    ndim = tensors[0].ndim
    axis = axis % ndim
    for t in tensors:
        if t.ndim != ndim or t.shape[:axis] + t.shape[axis + 1:] != tensors[0].shape[:axis] + tensors[0].shape[axis + 1:]:
            raise ShapeError(f"concat: incompatible shapes {[u.shape for u in tensors]}")
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _emit("concat", np.concatenate([t.data for t in tensors], axis=axis), tensors, backward)


def slice_(x: Tensor, index) -> Tensor:
    if isinstance(index, Tensor):
        index = index.data.astype(np.int64)
    try:
        out = np.array(x.data[index], copy=True)
    except IndexError as exc:
        raise ShapeError(f"slice: {exc}") from exc

    def backward(g):
        gx = np.zeros_like(x.data)
        np.add.at(gx, index, g)
        return (gx,)

    return _emit("slice", out, (x,), backward)


def sum_(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _normalize_axis(axis, x.ndim) if x.ndim else ()
    out = x.data.sum(axis=axes, keepdims=keepdims)

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axes) if axes else g
        return (np.broadcast_to(g, x.shape).copy(),)

    return _emit("sum", np.asarray(out), (x,), backward)


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _normalize_axis(axis, x.ndim) if x.ndim else ()
    count = int(np.prod([x.shape[a] for a in axes])) if axes else 1
    out = x.data.sum(axis=axes, keepdims=keepdims) / count

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axes) if axes else g
        return (np.broadcast_to(g / count, x.shape).copy(),)

    return _emit("mean", np.asarray(out), (x,), backward)


# ---------------------------------------------------------------------------
# Neural-network ops
# ---------------------------------------------------------------------------

def _softmax(arr: np.ndarray) -> np.ndarray:
    shifted = arr - arr.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_lastdim(x: Tensor) -> Tensor:
    out = _softmax(x.data)

    def backward(g):
        return (out * (g - (g * out).sum(axis=-1, keepdims=True)),)

    return _emit("softmax_lastdim", out, (x,), backward)


def log_softmax(x: Tensor) -> Tensor:
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    out = shifted - lse

    def backward(g):
        return (g - np.exp(out) * g.sum(axis=-1, keepdims=True),)

    return _emit("log_softmax", out, (x,), backward)


def layernorm(x: Tensor, eps: float = 1e-12) -> Tensor:
    """Normalize the last axis to zero mean and unit variance (no affine)."""
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    out = centered * inv

    def backward(g):
        gm = g.mean(axis=-1, keepdims=True)
        gxm = (g * out).mean(axis=-1, keepdims=True)
        return (inv * (g - gm - out * gxm),)

    return _emit("layernorm", out, (x,), backward)


def embedding_lookup(table: Tensor, ids) -> Tensor:
    ids = np.asarray(ids, dtype=np.int64)
    if table.ndim != 2:
        raise ShapeError(f"embedding table must be 2-D, got {table.shape}")
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise ShapeError(f"embedding ids out of range [0, {table.shape[0]})")

    def backward(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, ids, g)
        return (gt,)

    return _emit("embedding_lookup", table.data[ids], (table,), backward)


def cross_entropy(
    logits: Tensor,
    targets,
    reduction: str = "mean",
    ignore_index: int | None = None,
) -> Tensor:
    """Cross-entropy of ``(T, V)`` logits against ``T`` integer targets.

    Args:
        logits: Unnormalised scores, one row per target
        targets: Class index per row
        reduction: ``"mean"`` over counted rows, ``"sum"`` or ``"none"``
        ignore_index: Target value whose rows contribute nothing

    Raises:
        ShapeError: If shapes disagree, a target is out of range, or a
            ``"mean"`` reduction has no counted rows
    """
    targets = np.asarray(targets, dtype=np.int64)
    if logits.ndim != 2 or targets.shape != (logits.shape[0],):
        raise ShapeError(f"cross_entropy: logits {logits.shape} vs targets {targets.shape}")
    if reduction not in ("mean", "sum", "none"):
        raise ValueError(f"Unknown reduction '{reduction}'")
    keep = np.ones(targets.shape, dtype=bool) if ignore_index is None else targets != ignore_index
    safe = np.where(keep, targets, 0)
    if safe.size and (safe.min() < 0 or safe.max() >= logits.shape[1]):
        raise ShapeError("cross_entropy: target index out of range")
    count = int(keep.sum())
    if reduction == "mean" and count == 0:
        raise ShapeError("cross_entropy: no targets to average over")

    shifted = logits.data - logits.data.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    logp = shifted - lse
    rows = np.arange(targets.shape[0])
    per_row = np.where(keep, -logp[rows, safe], 0.0).astype(logits.dtype)
    if reduction == "none":
        out = per_row
    elif reduction == "sum":
        out = np.asarray(per_row.sum())
    else:
        out = np.asarray(per_row.sum() / count)

    def backward(g):
        grad = np.exp(logp)
        grad[rows, safe] -= 1.0
        grad *= keep[:, None]
        if reduction == "none":
            grad *= g[:, None]
        elif reduction == "sum":
            grad *= g
        else:
            grad *= g / count
        return (grad,)

    return _emit("cross_entropy", out, (logits,), backward)


def l2_normalize(x: Tensor) -> Tensor:
    """Scale every last-axis row of *x* to unit Euclidean norm."""
    norms = sqrt(sum_(mul(x, x), axis=-1))
    return scale_rows(x, div(1.0, norms))


# ---------------------------------------------------------------------------
# Backward
# ---------------------------------------------------------------------------

def backward(loss: Tensor) -> None:
    """Populate ``.grad`` on every leaf that contributed to *loss*.

    Raises:
        ShapeError: If *loss* is not a single element
        TapeError: If *loss* was not recorded or its tape was already used
    """
    if loss.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    tape = loss._tape
    if tape is None:
        raise TapeError("loss was not produced by a recorded computation")
    if tape.consumed:
        raise TapeError("backward already ran on this tape; run the forward pass again")

    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    leaves: dict[int, Tensor] = {}
    for entry in reversed(tape.entries):
        g = grads.pop(id(entry.output), None)
        if g is None:
            continue
        for tensor, gi in zip(entry.inputs, entry.backward(g)):
            if gi is None or not _tracked(tensor, tape):
                continue
            key = id(tensor)
            if tensor.requires_grad and tensor._tape is not tape:
                leaves[key] = tensor
            grads[key] = grads[key] + gi if key in grads else np.asarray(gi)

    for key, leaf in leaves.items():
        g = grads[key].astype(leaf.dtype, copy=False).reshape(leaf.shape)
        leaf.grad = g if leaf.grad is None else leaf.grad + g

    tape.consumed = True
    tape.entries = []
    if getattr(_state, "tape", None) is tape:
        _state.tape = None


__all__ = [
    "Tensor",
    "Tape",
    "TapeEntry",
    "as_tensor",
    "current_tape",
    "reset_tape",
    "no_grad",
    "add",
    "sub",
    "mul",
    "div",
    "neg",
    "exp",
    "log",
    "sqrt",
    "sigmoid",
    "silu",
    "tanh",
    "scale_rows",
    "matmul",
    "transpose",
    "reshape",
    "concat",
    "slice_",
    "sum_",
    "mean",
    "softmax_lastdim",
    "log_softmax",
    "layernorm",
    "embedding_lookup",
    "cross_entropy",
    "l2_normalize",
    "backward",
]
