"""Reverse-mode automatic differentiation over float64 numpy arrays.

Graphs are built eagerly: every op returns a :class:`Tensor` that remembers
its parents and a closure propagating the output gradient back to them.
Inside :func:`no_grad` no graph is recorded, which is what the runtime parser
uses.

Only the handful of ops the parsers need are provided, several of them fused
(``affine``, ``lstm_cell``, ``masked_log_softmax``) to keep the per-step
Python overhead low.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Sequence

import numpy as np

from ..errors import ContractError, NumericError

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def grad_enabled() -> bool:
    return _grad_enabled


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents: tuple = ()
        self._backward: Callable | None = None
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        tag = f" {self.name}" if self.name else ""
        return f"Tensor{tag}(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def item(self) -> float:
        return float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def backward(self, grad=None):
        """Populate ``.grad`` on every reachable tensor that requires it."""
        if grad is None:
            if self.data.size != 1:
                raise ContractError("backward() without a gradient needs a scalar output")
            if not np.isfinite(self.data).all():
                raise NumericError(f"non-finite loss {self.data!r}")
            grad = np.ones_like(self.data)
        order = _topological(self)
        self.grad = np.asarray(grad, dtype=np.float64)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)
                # interior gradients are not needed once propagated
                if node._parents:
                    node.grad = None

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _topological(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = g
    else:
        t.grad = t.grad + g


def _result(data, parents: Sequence[Tensor], backward: Callable) -> Tensor:
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# elementwise -----------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def back(g):
        _accumulate(a, _unbroadcast(g, a.data.shape))
        _accumulate(b, _unbroadcast(g, b.data.shape))

    return _result(a.data + b.data, (a, b), back)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def back(g):
        _accumulate(a, _unbroadcast(g, a.data.shape))
        _accumulate(b, _unbroadcast(-g, b.data.shape))

    return _result(a.data - b.data, (a, b), back)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def back(g):
        if a.requires_grad:
            _accumulate(a, _unbroadcast(g * b.data, a.data.shape))
        if b.requires_grad:
            _accumulate(b, _unbroadcast(g * a.data, b.data.shape))

    return _result(a.data * b.data, (a, b), back)


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.data)
    return _result(y, (a,), lambda g: _accumulate(a, g * (1.0 - y * y)))


def sigmoid(a: Tensor) -> Tensor:
    y = _sigmoid(a.data)
    return _result(y, (a,), lambda g: _accumulate(a, g * y * (1.0 - y)))


def exp(a: Tensor) -> Tensor:
    y = np.exp(a.data)
    return _result(y, (a,), lambda g: _accumulate(a, g * y))


def log(a: Tensor) -> Tensor:
    x = a.data
    return _result(np.log(x), (a,), lambda g: _accumulate(a, g / x))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


# linear algebra ------------------------------------------------------------------

def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def back(g):
        if a.requires_grad:
            _accumulate(a, g @ b.data.T)
        if b.requires_grad:
            _accumulate(b, a.data.T @ g)

    return _result(a.data @ b.data, (a, b), back)


def transpose(a: Tensor) -> Tensor:
    def back(g):
        _accumulate(a, g.T)

    return _result(a.data.T, (a,), back)


def affine(x: Tensor, W: Tensor, b: Tensor) -> Tensor:
    """``x @ W + b`` for a 2-D batch ``x``."""

    def back(g):
        if x.requires_grad:
            _accumulate(x, g @ W.data.T)
        if W.requires_grad:
            _accumulate(W, x.data.T @ g)
        if b.requires_grad:
            _accumulate(b, g.sum(axis=0))

    return _result(x.data @ W.data + b.data, (x, W, b), back)


# shape ---------------------------------------------------------------------------

def concat(ts: Sequence[Tensor], axis: int = -1) -> Tensor:
    ts = [as_tensor(t) for t in ts]
    data = np.concatenate([t.data for t in ts], axis=axis)
    bounds = np.cumsum([t.data.shape[axis] for t in ts])[:-1]

    def back(g):
        for t, piece in zip(ts, np.split(g, bounds, axis=axis)):
            _accumulate(t, piece)

    return _result(data, ts, back)


def slice_cols(a: Tensor, lo: int, hi: int) -> Tensor:
    def back(g):
        full = np.zeros_like(a.data)
        full[:, lo:hi] = g
        _accumulate(a, full)

    return _result(a.data[:, lo:hi], (a,), back)


def take_rows(table: Tensor, idx) -> Tensor:
    """Row lookup ``table[idx]`` (embedding lookup)."""
    idx = np.asarray(idx, dtype=np.intp)

    def back(g):
        full = np.zeros_like(table.data)
        np.add.at(full, idx, g)
        _accumulate(table, full)

    return _result(table.data[idx], (table,), back)


def pick(a: Tensor, idx) -> Tensor:
    """``a[r, idx[r]]`` for every row ``r``; returns shape ``(B,)``."""
    idx = np.asarray(idx, dtype=np.intp)
    rows = np.arange(a.data.shape[0])

    def back(g):
        full = np.zeros_like(a.data)
        full[rows, idx] = g
        _accumulate(a, full)

    return _result(a.data[rows, idx], (a,), back)


def where_rows(mask, a: Tensor, b: Tensor) -> Tensor:
    """Row-wise select: row ``r`` from ``a`` where ``mask[r]`` else from ``b``."""
    mask = np.asarray(mask, dtype=bool)
    m = mask[:, None]

    def back(g):
        if a.requires_grad:
            _accumulate(a, np.where(m, g, 0.0))
        if b.requires_grad:
            _accumulate(b, np.where(m, 0.0, g))

    return _result(np.where(m, a.data, b.data), (a, b), back)


def gather_rows(tensors: Sequence[Tensor], which, rows=None) -> Tensor:
    """``out[r] = tensors[which[r]][rows[r]]``.

    The persistent-history primitive behind the stack RNNs: each step appends
    one tensor, and stack pointers select rows out of earlier steps.
    """
    which = np.asarray(which, dtype=np.intp)
    B = which.shape[0]
    rows = np.arange(B) if rows is None else np.asarray(rows, dtype=np.intp)
    ks = np.unique(which)
    if ks.shape[0] == 1:
        src = tensors[int(ks[0])]
        sel_list = [(src, slice(None), rows)]
        data = src.data[rows]
    else:
        data = np.empty((B,) + tensors[int(ks[0])].data.shape[1:])
        sel_list = []
        for k in ks:
            sel = which == k
            src = tensors[int(k)]
            data[sel] = src.data[rows[sel]]
            sel_list.append((src, sel, rows[sel]))
    parents = [s for s, _, _ in sel_list]

    def back(g):
        for src, sel, r in sel_list:
            if not src.requires_grad:
                continue
            full = np.zeros_like(src.data)
            np.add.at(full, r, g[sel])
            _accumulate(src, full)

    return _result(data, parents, back)


# reductions --------------------------------------------------------------------------

def add_n(ts: Sequence[Tensor]) -> Tensor:
    data = ts[0].data.copy()
    for t in ts[1:]:
        data = data + t.data

    def back(g):
        for t in ts:
            _accumulate(t, g)

    return _result(data, ts, back)


def sum_all(a: Tensor) -> Tensor:
    return _result(np.asarray(a.data.sum()), (a,), lambda g: _accumulate(a, np.broadcast_to(g, a.data.shape).copy()))


def weighted_sum(a: Tensor, w) -> Tensor:
    """Scalar ``sum(w * a)`` with constant weights ``w``."""
    w = np.asarray(w, dtype=np.float64)
    return _result(np.asarray((a.data * w).sum()), (a,), lambda g: _accumulate(a, g * w))


def index(a: Tensor, sl) -> Tensor:
    """Basic indexing of a 1-D tensor (slices or integer arrays)."""

    def back(g):
        full = np.zeros_like(a.data)
        np.add.at(full, sl, g)
        _accumulate(a, full)

    return _result(a.data[sl], (a,), back)


# softmax ---------------------------------------------------------------------------

def masked_log_softmax(scores: Tensor, mask) -> Tensor:
    """Row-wise log-softmax restricted to ``mask``; masked entries are ``-inf``."""
    mask = np.asarray(mask, dtype=bool)
    if not mask.any(axis=-1).all():
        raise ContractError("masked softmax needs at least one valid entry per row")
    s = np.where(mask, scores.data, -np.inf)
    top = s.max(axis=-1, keepdims=True)
    lse = top + np.log(np.exp(s - top).sum(axis=-1, keepdims=True))
    out = s - lse
    p = np.exp(out)

    def back(g):
        g = np.where(mask, g, 0.0)
        _accumulate(scores, g - p * g.sum(axis=-1, keepdims=True))

    return _result(out, (scores,), back)


def log_softmax(scores: Tensor) -> Tensor:
    s = scores.data
    top = s.max(axis=-1, keepdims=True)
    out = s - (top + np.log(np.exp(s - top).sum(axis=-1, keepdims=True)))
    p = np.exp(out)
    return _result(out, (scores,), lambda g: _accumulate(scores, g - p * g.sum(axis=-1, keepdims=True)))


def masked_softmax(scores, mask) -> np.ndarray:
    """Probabilities over the valid entries of a score vector (or batch)."""
    scores = np.asarray(scores, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != scores.shape:
        raise ContractError("scores and mask differ in shape")
    if not mask.any(axis=-1).all():
        raise ContractError("masked softmax needs at least one valid entry")
    s = np.where(mask, scores, -np.inf)
    top = s.max(axis=-1, keepdims=True)
    logp = s - (top + np.log(np.exp(s - top).sum(axis=-1, keepdims=True)))
    return np.where(mask, np.exp(logp), 0.0)


# recurrent cell -------------------------------------------------------------------------

def lstm_cell(x: Tensor, hc: Tensor, W: Tensor, b: Tensor) -> Tensor:
    """One LSTM step on packed states.

    ``hc`` is ``[h; c]`` of width ``2H``; ``W`` has shape ``(D + H, 4H)`` with
    gate blocks ordered input, forget, candidate, output.  Returns the new
    packed ``[h'; c']``.
    """
    H = hc.data.shape[1] // 2
    D = x.data.shape[1]
    h, c = hc.data[:, :H], hc.data[:, H:]
    xh = np.concatenate([x.data, h], axis=1)
    z = xh @ W.data + b.data
    i = _sigmoid(z[:, :H])
    f = _sigmoid(z[:, H:2 * H])
    cand = np.tanh(z[:, 2 * H:3 * H])
    o = _sigmoid(z[:, 3 * H:])
    c_new = f * c + i * cand
    tc = np.tanh(c_new)
    h_new = o * tc

    def back(g):
        dh = g[:, :H]
        dc = g[:, H:] + dh * o * (1.0 - tc * tc)
        dz = np.concatenate(
            [
                dc * cand * i * (1.0 - i),
                dc * c * f * (1.0 - f),
                dc * i * (1.0 - cand * cand),
                dh * tc * o * (1.0 - o),
            ],
            axis=1,
        )
        if W.requires_grad:
            _accumulate(W, xh.T @ dz)
        if b.requires_grad:
            _accumulate(b, dz.sum(axis=0))
        if x.requires_grad or hc.requires_grad:
            dxh = dz @ W.data.T
            _accumulate(x, dxh[:, :D])
            if hc.requires_grad:
                _accumulate(hc, np.concatenate([dxh[:, D:], dc * f], axis=1))

    return _result(np.concatenate([h_new, c_new], axis=1), (x, hc, W, b), back)


def dropout(a: Tensor, p: float, rng: np.random.Generator | None) -> Tensor:
    if rng is None or p <= 0.0:
        return a
    keep = (rng.random(a.data.shape) >= p) / (1.0 - p)
    return mul(a, keep)
