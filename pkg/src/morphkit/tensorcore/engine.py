"""Tensor, Tape and the primitive op set.

Ops compute eagerly on float64 numpy arrays.  When a Tape is active and an
input requires gradients, the op records a backward rule; Tape.backward
replays the records in reverse execution order, accumulating into
Tensor.grad.  Tensors and tapes are single-worker objects; parameters may
be shared read-only across workers that each build private tapes.
"""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from morphkit import backend
from morphkit.errors import NumericalError, ShapeError

_TAPE_STACK: list["Tape"] = []
_GRAD_ENABLED = True


class Tensor:
    """A dense float64 array plus an optional gradient accumulator."""

    __slots__ = ("data", "grad", "requires_grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim > 0 and not arr.flags["C_CONTIGUOUS"]:
            arr = np.ascontiguousarray(arr)
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        else:
            self.grad.fill(0.0)

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{tag}, requires_grad={self.requires_grad})"


def tensor(data, requires_grad: bool = False, name: str | None = None) -> Tensor:
    return Tensor(data, requires_grad=requires_grad, name=name)


class Tape:
    """Ordered record of executed ops for one backward replay."""

    def __init__(self):
        self._nodes: list[tuple[Tensor, tuple[Tensor, ...], Callable]] = []

    def __enter__(self) -> "Tape":
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, *exc) -> None:
        popped = _TAPE_STACK.pop()
        assert popped is self, "tapes must unwind in LIFO order"

    def record(self, output: Tensor, inputs: tuple[Tensor, ...],
               backward_fn: Callable) -> None:
        self._nodes.append((output, inputs, backward_fn))

    def __len__(self) -> int:
        return len(self._nodes)

    def backward(self, loss: Tensor) -> None:
        """Populate grads of every trainable tensor reachable from loss.

        Tensors not on a path to the loss keep whatever their accumulator
        already holds (zeros after zero_grad).
        """
        if loss.data.shape != ():
            raise ShapeError(
                f"backward: loss must be a scalar, got shape {loss.data.shape}")
        if not np.isfinite(loss.data):
            raise NumericalError("backward: loss is not finite")
        loss.grad = np.ones((), dtype=np.float64)
        for output, inputs, backward_fn in reversed(self._nodes):
            g = output.grad
            if g is None:
                continue
            grads = backward_fn(g)
            for inp, gi in zip(inputs, grads):
                if gi is None or not inp.requires_grad:
                    continue
                if inp.grad is None:
                    inp.grad = np.array(gi, dtype=np.float64)
                else:
                    inp.grad += gi


class no_grad:
    """Context manager disabling tape recording (pure evaluation)."""

    def __enter__(self):
        global _GRAD_ENABLED
        self._prev = _GRAD_ENABLED
        _GRAD_ENABLED = False
        return self

    def __exit__(self, *exc):
        global _GRAD_ENABLED
        _GRAD_ENABLED = self._prev


def _prep(data, inputs: tuple[Tensor, ...]):
    tape = _TAPE_STACK[-1] if _TAPE_STACK else None
    recording = (_GRAD_ENABLED and tape is not None
                 and any(t.requires_grad for t in inputs))
    out = Tensor(data, requires_grad=recording)
    return out, (tape if recording else None)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, (gs, ss) in enumerate(zip(g.shape, shape)):
        if ss == 1 and gs != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g.reshape(shape)


def _check_broadcast(kind: str, a: Tensor, b: Tensor) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{kind}: incompatible shapes {a.shape} and {b.shape}")


# ---------------------------------------------------------------------------
# arithmetic


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast("add", a, b)
    out, tape = _prep(a.data + b.data, (a, b))
    if tape:
        def bwd(g):
            return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)
        tape.record(out, (a, b), bwd)
    return out


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast("sub", a, b)
    out, tape = _prep(a.data - b.data, (a, b))
    if tape:
        def bwd(g):
            return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)
        tape.record(out, (a, b), bwd)
    return out


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise multiply."""
    _check_broadcast("elementwise-multiply", a, b)
    out, tape = _prep(a.data * b.data, (a, b))
    if tape:
        def bwd(g):
            return (_unbroadcast(g * b.data, a.shape),
                    _unbroadcast(g * a.data, b.shape))
        tape.record(out, (a, b), bwd)
    return out


def neg(a: Tensor) -> Tensor:
    out, tape = _prep(-a.data, (a,))
    if tape:
        tape.record(out, (a,), lambda g: (-g,))
    return out


def scale(a: Tensor, c: float) -> Tensor:
    """Multiply by a python constant (no gradient for c)."""
    c = float(c)
    out, tape = _prep(a.data * c, (a,))
    if tape:
        tape.record(out, (a,), lambda g: (g * c,))
    return out


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim == 0 or b.ndim == 0 or a.ndim > 2 or b.ndim > 2:
        raise ShapeError(f"matmul: ranks must be 1 or 2, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    out, tape = _prep(a.data @ b.data, (a, b))
    if tape:
        def bwd(g):
            if a.ndim == 2 and b.ndim == 2:
                return g @ b.data.T, a.data.T @ g
            if a.ndim == 1 and b.ndim == 2:
                return b.data @ g, np.outer(a.data, g)
            if a.ndim == 2 and b.ndim == 1:
                return np.outer(g, b.data), a.data.T @ g
            return g * b.data, g * a.data
        tape.record(out, (a, b), bwd)
    return out


def weighted_sum(weights: Tensor, rows: Tensor) -> Tensor:
    """Weighted sum of matrix rows: (n,) x (n,d) -> (d,)."""
    if weights.ndim != 1 or rows.ndim != 2:
        raise ShapeError(
            f"weighted-sum: expected (n,) and (n,d), got {weights.shape} and {rows.shape}")
    return matmul(weights, rows)


def transpose(a: Tensor) -> Tensor:
    if a.ndim != 2:
        raise ShapeError(f"transpose: expected a matrix, got {a.shape}")
    out, tape = _prep(a.data.T.copy(), (a,))
    if tape:
        tape.record(out, (a,), lambda g: (g.T,))
    return out


# ---------------------------------------------------------------------------
# shape ops


def concat(parts: Sequence[Tensor], axis: int = 0) -> Tensor:
    parts = tuple(parts)
    if not parts:
        raise ShapeError("concat: no inputs")
    ndim = parts[0].ndim
    if any(p.ndim != ndim for p in parts):
        raise ShapeError(
            f"concat: mixed ranks {[p.shape for p in parts]}")
    out, tape = _prep(np.concatenate([p.data for p in parts], axis=axis), parts)
    if tape:
        sizes = [p.shape[axis] for p in parts]
        offsets = np.cumsum(sizes)[:-1]
        def bwd(g):
            return tuple(np.split(g, offsets, axis=axis))
        tape.record(out, parts, bwd)
    return out


def slice_axis(a: Tensor, start: int, stop: int, axis: int = 0) -> Tensor:
    if not 0 <= axis < a.ndim:
        raise ShapeError(f"slice: axis {axis} out of range for shape {a.shape}")
    sel = tuple(slice(None) if d != axis else slice(start, stop)
                for d in range(a.ndim))
    out, tape = _prep(a.data[sel].copy(), (a,))
    if tape:
        def bwd(g):
            full = np.zeros_like(a.data)
            full[sel] = g
            return (full,)
        tape.record(out, (a,), bwd)
    return out


def split(a: Tensor, sizes: Sequence[int], axis: int = 0) -> list[Tensor]:
    if sum(sizes) != a.shape[axis]:
        raise ShapeError(
            f"split: sizes {list(sizes)} do not cover axis {axis} of {a.shape}")
    outs = []
    start = 0
    for size in sizes:
        outs.append(slice_axis(a, start, start + size, axis=axis))
        start += size
    return outs


def stack_rows(vectors: Sequence[Tensor]) -> Tensor:
    vectors = tuple(vectors)
    if not vectors or any(v.ndim != 1 for v in vectors):
        raise ShapeError("stack: expected a non-empty sequence of vectors")
    out, tape = _prep(np.stack([v.data for v in vectors]), vectors)
    if tape:
        def bwd(g):
            return tuple(g[i] for i in range(len(vectors)))
        tape.record(out, vectors, bwd)
    return out


# ---------------------------------------------------------------------------
# nonlinearities and reductions


def tanh(a: Tensor) -> Tensor:
    data = np.tanh(a.data)
    out, tape = _prep(data, (a,))
    if tape:
        tape.record(out, (a,), lambda g: (g * (1.0 - data * data),))
    return out


def sigmoid(a: Tensor) -> Tensor:
    data = _stable_sigmoid(a.data)
    out, tape = _prep(data, (a,))
    if tape:
        tape.record(out, (a,), lambda g: (g * data * (1.0 - data),))
    return out


def log(a: Tensor) -> Tensor:
    with np.errstate(divide="ignore", invalid="ignore"):
        data = np.log(a.data)
    if not np.all(np.isfinite(data)):
        raise NumericalError("log: non-positive input")
    out, tape = _prep(data, (a,))
    if tape:
        tape.record(out, (a,), lambda g: (g / a.data,))
    return out


def exp(a: Tensor) -> Tensor:
    data = np.exp(a.data)
    if not np.all(np.isfinite(data)):
        raise NumericalError("exp: overflow")
    out, tape = _prep(data, (a,))
    if tape:
        tape.record(out, (a,), lambda g: (g * data,))
    return out


def softmax(a: Tensor) -> Tensor:
    """Softmax over a vector; strictly positive, sums to one."""
    if a.ndim != 1:
        raise ShapeError(f"softmax: expected a vector, got {a.shape}")
    shifted = a.data - a.data.max()
    e = np.exp(shifted)
    data = e / e.sum()
    out, tape = _prep(data, (a,))
    if tape:
        def bwd(g):
            return (data * (g - np.dot(g, data)),)
        tape.record(out, (a,), bwd)
    return out


def log_softmax(a: Tensor) -> Tensor:
    """Log-softmax over a vector (max-shifted, exact on uniform logits)."""
    if a.ndim != 1:
        raise ShapeError(f"log-softmax: expected a vector, got {a.shape}")
    shifted = a.data - a.data.max()
    data = shifted - np.log(np.exp(shifted).sum())
    out, tape = _prep(data, (a,))
    if tape:
        def bwd(g):
            return (g - np.exp(data) * g.sum(),)
        tape.record(out, (a,), bwd)
    return out


def tensor_sum(a: Tensor) -> Tensor:
    out, tape = _prep(a.data.sum(), (a,))
    if tape:
        tape.record(out, (a,), lambda g: (np.full_like(a.data, float(g)),))
    return out


def mean(a: Tensor) -> Tensor:
    n = a.size
    out, tape = _prep(a.data.mean(), (a,))
    if tape:
        tape.record(out, (a,), lambda g: (np.full_like(a.data, float(g) / n),))
    return out


def pick(a: Tensor, idx: int) -> Tensor:
    """Select one component of a vector as a scalar."""
    if a.ndim != 1:
        raise ShapeError(f"pick: expected a vector, got {a.shape}")
    out, tape = _prep(a.data[idx], (a,))
    if tape:
        def bwd(g):
            full = np.zeros_like(a.data)
            full[idx] = g
            return (full,)
        tape.record(out, (a,), bwd)
    return out


# ---------------------------------------------------------------------------
# table lookups (sparse backward: accumulate in place, return None)


def gather_row(table: Tensor, idx: int) -> Tensor:
    if table.ndim != 2:
        raise ShapeError(f"embedding-gather: expected a matrix, got {table.shape}")
    out, tape = _prep(table.data[idx].copy(), (table,))
    if tape:
        def bwd(g):
            if table.grad is None:
                table.grad = np.zeros_like(table.data)
            table.grad[idx] += g
            return (None,)
        tape.record(out, (table,), bwd)
    return out


def gather_rows(table: Tensor, ids: Sequence[int]) -> Tensor:
    if table.ndim != 2:
        raise ShapeError(f"embedding-gather: expected a matrix, got {table.shape}")
    ids = np.asarray(ids, dtype=np.intp)
    out, tape = _prep(table.data[ids], (table,))
    if tape:
        def bwd(g):
            if table.grad is None:
                table.grad = np.zeros_like(table.data)
            np.add.at(table.grad, ids, g)
            return (None,)
        tape.record(out, (table,), bwd)
    return out


# ---------------------------------------------------------------------------
# fused GRU cell


_ZERO_CACHE: dict[int, np.ndarray] = {}


def _zeros(n: int) -> np.ndarray:
    z = _ZERO_CACHE.get(n)
    if z is None:
        z = np.zeros(n)
        _ZERO_CACHE[n] = z
    return z


def gru_cell(x: Tensor, h: Tensor, wz: Tensor, wr: Tensor, wh: Tensor,
             bz: Tensor | None = None, br: Tensor | None = None,
             bh: Tensor | None = None) -> Tensor:
    """One gated-recurrence step: h_new = (1-z)*h + z*tanh(...).

    Weights act on the concatenation [x ; h]; pass no biases for the
    bias-free variant.  Executes on the selected kernel backend.
    """
    n_in, n_h = x.shape[0], h.shape[0]
    for name, w in (("wz", wz), ("wr", wr), ("wh", wh)):
        if w.shape != (n_h, n_in + n_h):
            raise ShapeError(
                f"gru_cell: {name} must be {(n_h, n_in + n_h)}, got {w.shape}")
    has_bias = bz is not None
    bzd = bz.data if has_bias else _zeros(n_h)
    brd = br.data if has_bias else _zeros(n_h)
    bhd = bh.data if has_bias else _zeros(n_h)
    h_new, z_gate, r_gate, cand = backend.gru_forward(
        x.data, h.data, wz.data, wr.data, wh.data, bzd, brd, bhd)
    inputs = (x, h, wz, wr, wh) + ((bz, br, bh) if has_bias else ())
    out, tape = _prep(h_new, inputs)
    if tape:
        def bwd(g):
            grads = backend.gru_backward(
                g, x.data, h.data, z_gate, r_gate, cand,
                wz.data, wr.data, wh.data)
            return grads if has_bias else grads[:5]
        tape.record(out, inputs, bwd)
    return out


def _stable_sigmoid(a: np.ndarray) -> np.ndarray:
    out = np.empty_like(a)
    pos = a >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-a[pos]))
    e = np.exp(a[~pos])
    out[~pos] = e / (1.0 + e)
    return out


# ---------------------------------------------------------------------------
# dispatch by kind name

_KINDS: dict[str, Callable] = {
    "matmul": matmul,
    "add": add,
    "elementwise-multiply": mul,
    "concat": concat,
    "split": split,
    "tanh": tanh,
    "sigmoid": sigmoid,
    "softmax": softmax,
    "log": log,
    "embedding-gather": gather_rows,
    "weighted-sum": weighted_sum,
    "mean": mean,
}


def apply(kind: str, *inputs, **kwargs):
    """Dispatch an op by kind name (shape errors name the kind)."""
    try:
        fn = _KINDS[kind]
    except KeyError:
        raise ValueError(f"unknown op kind {kind!r}") from None
    return fn(*inputs, **kwargs)
