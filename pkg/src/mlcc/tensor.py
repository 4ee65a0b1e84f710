"""Dense tensors with a reverse-mode gradient graph.

Every differentiable op returns a new :class:`Tensor` carrying a
:class:`GradRecord`. :func:`backward` walks the records reachable from a
scalar loss in reverse creation order and accumulates gradients into the
``grad`` attribute of leaf tensors that have ``requires_grad`` set.

Storage is a numpy array in C (row-major) order. Gradient checks run in
float64; training may use float32.
"""

from __future__ import annotations

import itertools
import threading
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Callable, Iterator, Sequence

import numpy as np

from .errors import DimensionError, GraphError, NumericError

_seq = itertools.count()
_local = threading.local()

ACTIVATIONS = ("relu", "identity", "gelu")


class GradRecord:
    """One node of the gradient graph: op name, inputs, saved values, output."""

    __slots__ = ("op", "inputs", "saved", "backward_fn", "seq", "consumed", "output_shape")

    def __init__(self, op: str, inputs: tuple, backward_fn: Callable, saved: dict, output_shape):
        self.op = op
        self.inputs = inputs
        self.backward_fn = backward_fn
        self.saved = saved
        self.output_shape = output_shape
        self.seq = next(_seq)
        self.consumed = False

    def __repr__(self):
        return f"GradRecord({self.op}, seq={self.seq})"


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "record", "__weakref__")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.array(data, dtype=dtype if dtype is not None else np.float64, copy=True)
        if arr.ndim == 0:
            arr = arr.reshape(())
        if any(d < 1 for d in arr.shape):
            raise DimensionError(f"tensor extents must be >= 1, got {arr.shape}")
        self.data = np.ascontiguousarray(arr)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.record: GradRecord | None = None

    @classmethod
    def _wrap(cls, arr: np.ndarray) -> "Tensor":
        t = cls.__new__(cls)
        t.data = arr
        t.requires_grad = False
        t.grad = None
        t.record = None
        return t

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

    @property
    def strides(self) -> tuple[int, ...]:
        """Row-major element strides."""
        out, acc = [], 1
        for d in reversed(self.shape):
            out.append(acc)
            acc *= d
        return tuple(reversed(out))

    def flat_index(self, coord: Sequence[int]) -> int:
        return sum(i * s for i, s in zip(coord, self.strides))

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.size == 1 else float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(as_tensor(other, self.dtype)))

    def __rsub__(self, other):
        return add(as_tensor(other, self.dtype), neg(self))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        return transpose(self, axes if axes else None)

    def sum(self):
        return tsum(self)

    def backward(self) -> dict:
        return backward(self)


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(x, dtype=dtype)


def _tracks(*ts: Tensor) -> bool:
    return any(t.requires_grad or t.record is not None for t in ts)


@contextmanager
def no_grad():
    """Ops inside the block record nothing; use for evaluation."""
    prev = getattr(_local, "no_grad", False)
    _local.no_grad = True
    try:
        yield
    finally:
        _local.no_grad = prev


def _make(arr: np.ndarray, op: str, inputs: tuple, backward_fn: Callable, **saved) -> Tensor:
    out = Tensor._wrap(arr)
    if not getattr(_local, "no_grad", False) and _tracks(*inputs):
        out.record = GradRecord(op, inputs, backward_fn, saved, arr.shape)
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, d in enumerate(shape) if d == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


# ---------------------------------------------------------------------------
# FLOP instrumentation and relu-kink monitoring

class FlopCounter:
    """Accumulates forward FLOPs per scope label.

    Convention: one multiply-accumulate is 2 FLOPs, a non-identity activation
    or a bias add is 1 FLOP per element, data movement is free.
    """

    def __init__(self):
        self.by_scope: dict[str, int] = {}
        self._scope: list[str] = ["other"]

    @property
    def total(self) -> int:
        return sum(self.by_scope.values())

    def add(self, n: int) -> None:
        key = self._scope[-1]
        self.by_scope[key] = self.by_scope.get(key, 0) + int(n)


@contextmanager
def count_flops() -> Iterator[FlopCounter]:
    counter = FlopCounter()
    prev = getattr(_local, "flops", None)
    _local.flops = counter
    try:
        yield counter
    finally:
        _local.flops = prev


@contextmanager
def flop_scope(name: str):
    counter = getattr(_local, "flops", None)
    if counter is None:
        yield
        return
    counter._scope.append(name)
    try:
        yield
    finally:
        counter._scope.pop()


def _flops(n: int) -> None:
    counter = getattr(_local, "flops", None)
    if counter is not None:
        counter.add(n)


@contextmanager
def _watch_kinks() -> Iterator[list]:
    patterns: list[np.ndarray] = []
    prev = getattr(_local, "kinks", None)
    _local.kinks = patterns
    try:
        yield patterns
    finally:
        _local.kinks = prev


# ---------------------------------------------------------------------------
# ops

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product over the last two axes; leading axes broadcast."""
    if a.ndim < 2 or b.ndim < 2:
        raise DimensionError(f"matmul needs rank >= 2 operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul inner extents differ: {a.shape} @ {b.shape}")
    try:
        out = np.matmul(a.data, b.data)
    except ValueError as exc:
        raise DimensionError(f"matmul batch extents incompatible: {a.shape} @ {b.shape}") from exc
    _flops(2 * out.size * a.shape[-1])

    def back(g):
        ga = _unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.shape)
        gb = _unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.shape)
        return ga, gb

    return _make(out, "matmul", (a, b), back)


def add(a, b) -> Tensor:
    a = as_tensor(a)
    b = as_tensor(b, a.dtype)
    try:
        out = a.data + b.data
    except ValueError as exc:
        raise DimensionError(f"add shapes incompatible: {a.shape} and {b.shape}") from exc

    def back(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _make(out, "add", (a, b), back)


def add_bias(x: Tensor, bias: Tensor) -> Tensor:
    """``x + bias`` counted as one FLOP per output element."""
    out = add(x, bias)
    _flops(out.size)
    return out


def mul(a, b) -> Tensor:
    a = as_tensor(a)
    b = as_tensor(b, a.dtype)
    try:
        out = a.data * b.data
    except ValueError as exc:
        raise DimensionError(f"mul shapes incompatible: {a.shape} and {b.shape}") from exc

    def back(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _make(out, "mul", (a, b), back)


def neg(a: Tensor) -> Tensor:
    return _make(-a.data, "neg", (a,), lambda g: (-g,))


def scale(a: Tensor, alpha: float) -> Tensor:
    return _make(a.data * alpha, "scale", (a,), lambda g: (g * alpha,))


def tsum(a: Tensor) -> Tensor:
    out = np.asarray(a.data.sum(), dtype=a.dtype)
    return _make(out, "sum", (a,), lambda g: (np.broadcast_to(g, a.shape).copy(),))


def mean(a: Tensor) -> Tensor:
    n = a.size
    out = np.asarray(a.data.mean(), dtype=a.dtype)
    return _make(out, "mean", (a,), lambda g: (np.full(a.shape, g / n, dtype=a.dtype),))


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    try:
        out = a.data.reshape(tuple(shape))
    except ValueError as exc:
        raise DimensionError(f"cannot reshape {a.shape} to {tuple(shape)}") from exc
    return _make(out, "reshape", (a,), lambda g: (g.reshape(a.shape),))


def transpose(a: Tensor, axes: Sequence[int] | None = None) -> Tensor:
    axes = tuple(range(a.ndim))[::-1] if axes is None else tuple(axes)
    inv = tuple(np.argsort(axes))
    out = np.ascontiguousarray(a.data.transpose(axes))
    return _make(out, "transpose", (a,), lambda g: (g.transpose(inv),))


def swap_last(a: Tensor) -> Tensor:
    axes = list(range(a.ndim))
    axes[-1], axes[-2] = axes[-2], axes[-1]
    return transpose(a, axes)


def slice_last(a: Tensor, start: int, stop: int) -> Tensor:
    """Columns ``[start, stop)`` of the last axis."""
    if not 0 <= start < stop <= a.shape[-1]:
        raise DimensionError(f"slice [{start}, {stop}) out of range for last extent {a.shape[-1]}")
    out = np.ascontiguousarray(a.data[..., start:stop])

    def back(g):
        full = np.zeros(a.shape, dtype=g.dtype)
        full[..., start:stop] = g
        return (full,)

    return _make(out, "slice", (a,), back)


def concat(parts: Sequence[Tensor], axis: int = -1) -> Tensor:
    parts = list(parts)
    if not parts:
        raise DimensionError("concat of an empty list")
    ndim = parts[0].ndim
    ax = axis % ndim
    ref = parts[0].shape
    for p in parts[1:]:
        if p.ndim != ndim or any(p.shape[i] != ref[i] for i in range(ndim) if i != ax):
            raise DimensionError(
                f"concat along axis {axis}: extents disagree, {ref} vs {p.shape}")
    if len(parts) == 1:
        return parts[0]
    out = np.concatenate([p.data for p in parts], axis=ax)
    bounds = np.cumsum([0] + [p.shape[ax] for p in parts])

    def back(g):
        return tuple(
            np.ascontiguousarray(np.take(g, np.arange(bounds[i], bounds[i + 1]), axis=ax))
            for i in range(len(parts)))

    return _make(out, "concat", tuple(parts), back)


def concat_last(parts: Sequence[Tensor]) -> Tensor:
    return concat(parts, axis=-1)


def _gelu(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    c = np.sqrt(2.0 / np.pi)
    u = c * (x + 0.044715 * x ** 3)
    t = np.tanh(u)
    y = 0.5 * x * (1.0 + t)
    dy = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * c * (1.0 + 3 * 0.044715 * x * x)
    return y, dy


def activation(x: Tensor, kind: str) -> Tensor:
    """Elementwise activation. ``relu'(0) = 0``; identity is free and exact."""
    if kind == "identity":
        return x
    if kind == "relu":
        kinks = getattr(_local, "kinks", None)
        if kinks is not None:
            kinks.append(x.data > 0)
        mask = x.data > 0
        _flops(x.size)
        return _make(np.where(mask, x.data, 0).astype(x.dtype), "relu", (x,),
                     lambda g: (g * mask,))
    if kind == "gelu":
        y, dy = _gelu(x.data)
        _flops(x.size)
        return _make(y.astype(x.dtype), "gelu", (x,), lambda g: (g * dy,))
    raise ValueError(f"unknown activation {kind!r}; expected one of {ACTIVATIONS}")


def relu(x: Tensor) -> Tensor:
    return activation(x, "relu")


def gather_rows(table: Tensor, index: np.ndarray) -> Tensor:
    """``table[index]`` for an integer index array; rows outside get no gradient."""
    index = np.asarray(index)
    rows = table.shape[0]
    if index.size and (index.min() < 0 or index.max() >= rows):
        bad = index[(index < 0) | (index >= rows)][0]
        raise IndexError(f"bucket {int(bad)} out of range for table with {rows} rows")
    out = table.data[index]

    def back(g):
        full = np.zeros(table.shape, dtype=g.dtype)
        np.add.at(full, index.reshape(-1), g.reshape(-1, *table.shape[1:]))
        return (full,)

    return _make(out, "gather", (table,), back)


def logistic_loss(logits: Tensor, labels) -> Tensor:
    """Mean binary cross-entropy on raw logits, in log-sum-exp form."""
    y = np.asarray(labels)
    if y.shape != logits.shape:
        raise DimensionError(f"labels {y.shape} do not match logits {logits.shape}")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be 0 or 1")
    z = logits.data
    y = y.astype(z.dtype)
    per = np.logaddexp(0.0, z) - y * z
    out = np.asarray(per.mean(), dtype=z.dtype)
    n = z.size

    def back(g):
        p = 0.5 * (1.0 + np.tanh(0.5 * z))
        return ((p - y) * (g / n),)

    return _make(out, "logistic_loss", (logits,), back)


# ---------------------------------------------------------------------------
# backward

def _collect(root: Tensor) -> list[GradRecord]:
    seen: set[int] = set()
    records: list[GradRecord] = []
    stack = [root]
    while stack:
        t = stack.pop()
        rec = t.record
        if rec is None or id(rec) in seen:
            continue
        seen.add(id(rec))
        records.append(rec)
        stack.extend(rec.inputs)
    records.sort(key=lambda r: r.seq, reverse=True)
    return records


def backward(loss: Tensor) -> dict[Tensor, np.ndarray]:
    """Propagate d(loss)/d(.) to every leaf with ``requires_grad``.

    Gradients accumulate into ``leaf.grad``. Returns a map from each leaf that
    received a gradient in this pass to that gradient. A graph can be consumed
    only once.
    """
    if loss.size != 1:
        raise DimensionError(f"backward needs a scalar loss, got shape {loss.shape}")
    if loss.record is None:
        if loss.requires_grad:
            g = np.ones(loss.shape, dtype=loss.dtype)
            loss.grad = g if loss.grad is None else loss.grad + g
            return {loss: g}
        raise GraphError("loss is not connected to any tensor that requires grad")
    if loss.record.consumed:
        raise GraphError("backward called on a graph that was already consumed")

    records = _collect(loss)
    grads: dict[int, np.ndarray] = {id(loss): np.ones(loss.shape, dtype=loss.dtype)}
    leaves: dict[int, Tensor] = {}
    owners: dict[int, Tensor] = {}
    for rec in records:
        for t in rec.inputs:
            owners[id(t)] = t

    # each record's output tensor is identified through the tensor owning it
    out_of: dict[int, int] = {}
    for tid, t in owners.items():
        if t.record is not None:
            out_of[id(t.record)] = tid
    out_of[id(loss.record)] = id(loss)

    for rec in records:
        g = grads.pop(out_of[id(rec)], None)
        if g is None:
            rec.consumed = True
            continue
        in_grads = rec.backward_fn(g)
        for t, gi in zip(rec.inputs, in_grads):
            if gi is None or not (t.requires_grad or t.record is not None):
                continue
            key = id(t)
            if key in grads:
                grads[key] = grads[key] + gi
            else:
                grads[key] = gi
            if t.record is None:
                leaves[key] = t
        rec.consumed = True
        rec.saved = {}
        rec.backward_fn = _consumed_backward

    result: dict[Tensor, np.ndarray] = {}
    for key, t in leaves.items():
        g = grads[key].astype(t.dtype, copy=False).reshape(t.shape)
        t.grad = g.copy() if t.grad is None else t.grad + g
        result[t] = g
    return result


def _consumed_backward(g):
    raise GraphError("backward called on a graph that was already consumed")


# ---------------------------------------------------------------------------
# finite-difference checking

@dataclass
class GradCheckResult:
    max_rel_error: float
    worst_index: tuple | None
    n_checked: int
    excluded: list = field(default_factory=list)

    def __float__(self):
        return self.max_rel_error

    def passed(self, tol: float = 1e-4) -> bool:
        return self.max_rel_error < tol


def grad_check(f: Callable[[Tensor], Tensor], x, eps: float = 1e-5, floor: float = 1e-6) -> GradCheckResult:
    """Compare the analytic gradient of scalar ``f`` at ``x`` against central differences.

    Relative error per coordinate is
    ``|analytic - numeric| / max(|analytic|, |numeric|, floor)``. The floor
    (default 1e-6) keeps round-off in ``f`` from dominating coordinates whose
    gradient is itself near zero: at ``eps = 1e-5`` the central difference
    carries an absolute noise of roughly ``1e-16 * |f| / eps``. Coordinates
    whose perturbation flips any relu input across zero are excluded and
    reported in ``excluded``.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if isinstance(x, Tensor):
        x_t = x
    else:
        x_t = Tensor(np.asarray(x, dtype=np.float64), requires_grad=True)
    x_t.requires_grad = True
    x_t.grad = None
    base = x_t.data.copy()

    out = f(x_t)
    if out.size != 1:
        raise DimensionError(f"grad_check needs a scalar function, got shape {out.shape}")
    if not np.isfinite(out.data).all():
        raise NumericError("non-finite function value at the base point")
    if out.record is None:
        analytic = np.zeros_like(base)
    else:
        backward(out)
        analytic = np.zeros_like(base) if x_t.grad is None else x_t.grad.copy()
    if not np.isfinite(analytic).all():
        raise NumericError("non-finite analytic gradient")

    def evaluate(arr):
        x_t.data = arr
        with _watch_kinks() as pats:
            val = f(Tensor._wrap(arr)).item()
        return val, pats

    worst, worst_idx, excluded, checked = 0.0, None, [], 0
    try:
        for idx in np.ndindex(base.shape):
            plus = base.copy()
            plus[idx] += eps
            minus = base.copy()
            minus[idx] -= eps
            fp, pp = evaluate(plus)
            fm, pm = evaluate(minus)
            if not (np.isfinite(fp) and np.isfinite(fm)):
                raise NumericError(f"non-finite function value near coordinate {idx}")
            if len(pp) != len(pm) or any(not np.array_equal(a, b) for a, b in zip(pp, pm)):
                excluded.append(idx)
                continue
            numeric = (fp - fm) / (2 * eps)
            a = analytic[idx]
            rel = abs(a - numeric) / max(abs(a), abs(numeric), floor)
            checked += 1
            if rel > worst or worst_idx is None:
                worst, worst_idx = rel, idx
    finally:
        x_t.data = base
    return GradCheckResult(float(worst), worst_idx, checked, excluded)
