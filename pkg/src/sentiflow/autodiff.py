"""Dense tensors with tape-based reverse-mode differentiation.

Operations record themselves on the active :class:`Tape` (entered with a
``with`` block) whenever at least one input requires a gradient. Outside a
tape the same functions are plain numpy forward computations, which is what
decoding uses.

Most ops act on the last axis, so a vector ``[d]`` and a row batch ``[B, d]``
go through the same code path. There is no general broadcasting.
"""

from __future__ import annotations

import threading
from typing import Callable, Iterable, Sequence

import numpy as np

DEFAULT_DTYPE = np.float64

_local = threading.local()


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible."""


class Tensor:
    __slots__ = ("data", "requires_grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.asarray(data)
        if arr.dtype.kind != "f":
            arr = arr.astype(DEFAULT_DTYPE)
        self.data = arr
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self) -> str:
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(shape={self.shape}, requires_grad={self.requires_grad})"

    # Operator sugar for the handful of ops models use constantly.
    def __add__(self, other: Tensor) -> Tensor:
        return add(self, other)

    def __mul__(self, other: Tensor) -> Tensor:
        return mul(self, other)

    def __matmul__(self, other: Tensor) -> Tensor:
        return matmul(self, other)


class _Node:
    __slots__ = ("out", "inputs", "backward")

    def __init__(self, out: Tensor, inputs: tuple[Tensor, ...], backward: Callable):
        self.out = out
        self.inputs = inputs
        self.backward = backward


class Tape:
    """Ordered record of executed operations.

    Recording order is a topological order of the computation graph, so the
    backward pass simply walks the nodes in reverse.
    """

    def __init__(self):
        self.nodes: list[_Node] = []
        self._produced: set[int] = set()
        self._prev: Tape | None = None

    def __enter__(self) -> Tape:
        self._prev = getattr(_local, "tape", None)
        _local.tape = self
        return self

    def __exit__(self, *exc) -> None:
        _local.tape = self._prev
        self._prev = None

    def __len__(self) -> int:
        return len(self.nodes)

    def record(self, out: Tensor, inputs: tuple[Tensor, ...], backward: Callable) -> None:
        self.nodes.append(_Node(out, inputs, backward))
        self._produced.add(id(out))

    def __contains__(self, t: Tensor) -> bool:
        return id(t) in self._produced


def active_tape() -> Tape | None:
    return getattr(_local, "tape", None)


def _result(data: np.ndarray, inputs: tuple[Tensor, ...], backward: Callable) -> Tensor:
    tape = active_tape()
    needs = tape is not None and any(t.requires_grad for t in inputs)
    out = Tensor(data, requires_grad=needs)
    if needs:
        tape.record(out, inputs, backward)
    return out


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def constant(data) -> Tensor:
    return Tensor(np.array(data, dtype=DEFAULT_DTYPE))


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product of ``a[m, k]`` and ``b[k, n]``."""
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: cannot multiply shapes {a.shape} and {b.shape}")
    A, B = a.data, b.data

    def backward(g):
        return g @ B.T, A.T @ g

    return _result(A @ B, (a, b), backward)


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """``x @ w.T + b`` for ``x`` of shape ``[d]`` or ``[B, d]`` and ``w[n, d]``.

    Weights are stored output-major (rows are output units), so the same
    parameter serves a single vector or a row batch.
    """
    if w.ndim != 2 or x.ndim not in (1, 2) or x.shape[-1] != w.shape[1]:
        raise ShapeError(f"linear: input {x.shape} incompatible with weight {w.shape}")
    if b is not None and b.shape != (w.shape[0],):
        raise ShapeError(f"linear: bias {b.shape} incompatible with weight {w.shape}")
    X, W = x.data, w.data
    out = X @ W.T
    if b is not None:
        out = out + b.data

    def backward(g):
        if X.ndim == 1:
            gw = np.outer(g, X)
            gb = g
        else:
            gw = g.T @ X
            gb = g.sum(axis=0)
        gx = g @ W
        return (gx, gw, gb) if b is not None else (gx, gw)

    inputs = (x, w, b) if b is not None else (x, w)
    return _result(out, inputs, backward)


def _check_same(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_same("add", a, b)
    return _result(a.data + b.data, (a, b), lambda g: (g, g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_same("mul", a, b)
    A, B = a.data, b.data
    return _result(A * B, (a, b), lambda g: (g * B, g * A))


def elementwise(a: Tensor, b: Tensor, kind: str) -> Tensor:
    if kind == "add":
        return add(a, b)
    if kind == "mul":
        return mul(a, b)
    raise ValueError(f"unknown elementwise kind {kind!r}")


def scale(a: Tensor, factor: float) -> Tensor:
    return _result(a.data * factor, (a,), lambda g: (g * factor,))


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    # Split by sign so exp never overflows.
    e = np.exp(-np.abs(x))
    y = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return _result(y, (a,), lambda g: (g * y * (1.0 - y),))


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.data)
    return _result(y, (a,), lambda g: (g * (1.0 - y * y),))


def activation(a: Tensor, kind: str) -> Tensor:
    if kind == "sigmoid":
        return sigmoid(a)
    if kind == "tanh":
        return tanh(a)
    raise ValueError(f"unknown activation {kind!r}")


def concat(a: Tensor, b: Tensor, axis: int = -1) -> Tensor:
    if a.ndim != b.ndim:
        raise ShapeError(f"concat: rank mismatch {a.shape} vs {b.shape}")
    ax = axis % a.ndim
    for d in range(a.ndim):
        if d != ax and a.shape[d] != b.shape[d]:
            raise ShapeError(f"concat: shapes {a.shape} and {b.shape} differ off axis {axis}")
    split = a.shape[ax]
    out = np.concatenate([a.data, b.data], axis=ax)

    def backward(g):
        return np.split(g, [split], axis=ax)

    return _result(out, (a, b), backward)


def slice_last(a: Tensor, start: int, stop: int) -> Tensor:
    """Columns ``start:stop`` of the last axis."""
    n = a.shape[-1]
    if not 0 <= start <= stop <= n:
        raise ShapeError(f"slice [{start}:{stop}] out of range for shape {a.shape}")
    shape = a.shape

    def backward(g):
        full = np.zeros(shape, dtype=g.dtype)
        full[..., start:stop] = g
        return (full,)

    return _result(a.data[..., start:stop], (a,), backward)


def split_last(a: Tensor, parts: int) -> list[Tensor]:
    n = a.shape[-1]
    if n % parts:
        raise ShapeError(f"cannot split last axis of {a.shape} into {parts} parts")
    k = n // parts
    return [slice_last(a, i * k, (i + 1) * k) for i in range(parts)]


def embedding_lookup(table: Tensor, index) -> Tensor:
    """Row ``index`` of ``table[V, d]``; a sequence of indices returns ``[B, d]``."""
    if table.ndim != 2:
        raise ShapeError(f"embedding table must be 2-D, got {table.shape}")
    V = table.shape[0]
    idx = np.asarray(index, dtype=np.int64)
    if idx.ndim > 1:
        raise ShapeError("embedding_lookup takes a scalar index or a 1-D index sequence")
    if np.any(idx < 0) or np.any(idx >= V):
        raise IndexError(f"embedding index {index} out of range for table with {V} rows")
    shape = table.shape

    def backward(g):
        full = np.zeros(shape, dtype=g.dtype)
        if idx.ndim == 0:
            full[int(idx)] += g
        else:
            np.add.at(full, idx, g)
        return (full,)

    return _result(table.data[idx], (table,), backward)


def _log_softmax(x: np.ndarray) -> np.ndarray:
    z = x - x.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def log_softmax(x: np.ndarray) -> np.ndarray:
    """Stable log-softmax over the last axis of a plain array."""
    return _log_softmax(np.asarray(x, dtype=DEFAULT_DTYPE))


def softmax_cross_entropy(logits: Tensor, gold, weights=None) -> Tensor:
    """Negative log-likelihood of ``gold`` under ``softmax(logits)``.

    With 1-D logits this is the scalar ``-log softmax(logits)[gold]``. With
    row-batched logits ``[B, K]``, ``gold`` holds one class per row and the
    result is the scalar ``sum_r weights[r] * nll_r`` (weights default to
    ``1/B``, i.e. the batch mean). Zero-weight rows may carry any gold index.
    """
    K = logits.shape[-1]
    gold_arr = np.asarray(gold, dtype=np.int64)
    if logits.ndim == 1:
        if gold_arr.ndim != 0:
            raise ShapeError("1-D logits take a single gold index")
        rows = 1
        L = logits.data[None, :]
        gold_arr = gold_arr[None]
        w = np.ones(1) if weights is None else np.asarray(weights, dtype=DEFAULT_DTYPE).reshape(1)
    elif logits.ndim == 2:
        rows = logits.shape[0]
        if gold_arr.shape != (rows,):
            raise ShapeError(f"gold shape {gold_arr.shape} does not match logits {logits.shape}")
        L = logits.data
        if weights is None:
            w = np.full(rows, 1.0 / rows)
        else:
            w = np.asarray(weights, dtype=DEFAULT_DTYPE)
            if w.shape != (rows,):
                raise ShapeError(f"weights shape {w.shape} does not match {rows} rows")
    else:
        raise ShapeError(f"logits must be 1-D or 2-D, got {logits.shape}")
    if np.any(gold_arr < 0) or np.any(gold_arr >= K):
        raise IndexError(f"gold index {gold} out of range for {K} classes")

    logp = _log_softmax(L)
    ar = np.arange(rows)
    nll = -logp[ar, gold_arr]
    loss = float(np.dot(w, nll)) if rows > 1 else float(w[0] * nll[0])
    one_hot_shape = L.shape
    flat = logits.ndim == 1

    def backward(g):
        grad = np.exp(logp)
        grad[ar, gold_arr] -= 1.0
        grad *= (w * g)[:, None]
        return (grad[0] if flat else grad.reshape(one_hot_shape),)

    return _result(np.array(loss, dtype=DEFAULT_DTYPE), (logits,), backward)


def sum_all(a: Tensor) -> Tensor:
    shape = a.shape
    return _result(np.array(a.data.sum()), (a,), lambda g: (np.full(shape, g, dtype=a.data.dtype),))


def add_scalars(terms: Sequence[Tensor]) -> Tensor:
    """Sum of scalar tensors as one tape node."""
    if not terms:
        return constant(0.0)
    total = terms[0].data.copy()
    for t in terms[1:]:
        total = total + t.data
    return _result(total, tuple(terms), lambda g: tuple(g for _ in terms))


# ---------------------------------------------------------------------------
# Backward pass
# ---------------------------------------------------------------------------


def backward(tape: Tape, loss: Tensor, params: Iterable[Tensor] | None = None) -> dict[Tensor, np.ndarray]:
    """Reverse sweep from a scalar ``loss``.

    Returns a mapping from every leaf tensor that requires a gradient to its
    accumulated gradient. If ``params`` is given, exactly those tensors are
    returned, with zeros for any the loss does not depend on.
    """
    if loss.data.size != 1 or loss.ndim != 0:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    if loss not in tape:
        raise ValueError("loss was not produced on this tape")

    grads: dict[int, np.ndarray] = {id(loss): np.ones((), dtype=loss.data.dtype)}
    leaves: dict[int, Tensor] = {}
    for node in reversed(tape.nodes):
        g = grads.pop(id(node.out), None)
        if g is None:
            continue
        in_grads = node.backward(g)
        for t, gi in zip(node.inputs, in_grads):
            if not t.requires_grad:
                continue
            key = id(t)
            if key in grads:
                grads[key] = grads[key] + gi
            else:
                grads[key] = gi
            if t not in tape:
                leaves[key] = t

    if params is None:
        return {t: grads[k] for k, t in leaves.items()}
    return {p: grads.get(id(p), np.zeros_like(p.data)) for p in params}
