"""Minimal reverse-mode differentiation over numpy arrays.

Each operation builds a `Var` holding the forward value and a closure that
maps the output gradient to per-parent gradients. `backward` walks the
graph once in reverse topological order, so gradients are exact (no
approximation anywhere) and deterministic.

Only the handful of array operations the translation model needs are
implemented; all of them support the batched shapes used in training.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

Array = np.ndarray


# ---------------------------------------------------------------------------
# numerically stable primitives, shared with the plain-numpy inference path


def stable_sigmoid(x: Array) -> Array:
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softmax_lastaxis(x: Array) -> Array:
    z = x - np.max(x, axis=-1, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=-1, keepdims=True)


def log_softmax_lastaxis(x: Array) -> Array:
    z = x - np.max(x, axis=-1, keepdims=True)
    return z - np.log(np.sum(np.exp(z), axis=-1, keepdims=True))


def _unbroadcast(grad: Array, shape: tuple[int, ...]) -> Array:
    """Sum `grad` down to `shape`, inverting numpy broadcasting."""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Var:
    """A node in the computation graph: value, parents, local backward."""

    __slots__ = ("value", "grad", "parents", "bw")

    # let `ndarray <op> Var` dispatch to the reflected Var operators
    __array_ufunc__ = None

    def __init__(
        self,
        value: Array,
        parents: Sequence["Var"] = (),
        bw: Callable[[Array], Sequence[Array | None]] | None = None,
    ):
        self.value = value if isinstance(value, np.ndarray) else np.asarray(value, dtype=np.float64)
        self.grad: Array | None = None
        self.parents = tuple(parents)
        self.bw = bw

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def __repr__(self) -> str:  # pragma: no cover - debug aid
        return "Var(shape=%s)" % (self.value.shape,)

    # -- operator sugar ----------------------------------------------------

    def __add__(self, other):
        return add(self, _wrap(other))

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, _wrap(other))

    def __rsub__(self, other):
        return sub(_wrap(other), self)

    def __mul__(self, other):
        return mul(self, _wrap(other))

    __rmul__ = __mul__

    def __neg__(self):
        return Var(-self.value, (self,), lambda g: (-g,))

    def __matmul__(self, other):
        return matmul(self, _wrap(other))


def _wrap(x) -> Var:
    return x if isinstance(x, Var) else Var(np.asarray(x, dtype=np.float64))


def constant(x) -> Var:
    return _wrap(x)


# ---------------------------------------------------------------------------
# operations


def add(a: Var, b: Var) -> Var:
    def bw(g):
        return _unbroadcast(g, a.value.shape), _unbroadcast(g, b.value.shape)

    return Var(a.value + b.value, (a, b), bw)


def sub(a: Var, b: Var) -> Var:
    def bw(g):
        return _unbroadcast(g, a.value.shape), _unbroadcast(-g, b.value.shape)

    return Var(a.value - b.value, (a, b), bw)


def mul(a: Var, b: Var) -> Var:
    def bw(g):
        return _unbroadcast(g * b.value, a.value.shape), _unbroadcast(g * a.value, b.value.shape)

    return Var(a.value * b.value, (a, b), bw)


def matmul(a: Var, b: Var) -> Var:
    """`a @ b` with 2-D `b`; `a` may carry extra leading batch axes."""

    def bw(g):
        ga = g @ b.value.T
        a2 = a.value.reshape(-1, a.value.shape[-1])
        g2 = g.reshape(-1, g.shape[-1])
        return ga, a2.T @ g2

    return Var(a.value @ b.value, (a, b), bw)


def tanh(x: Var) -> Var:
    t = np.tanh(x.value)
    return Var(t, (x,), lambda g: (g * (1.0 - t * t),))


def sigmoid(x: Var) -> Var:
    s = stable_sigmoid(x.value)
    return Var(s, (x,), lambda g: (g * s * (1.0 - s),))


def take_rows(m: Var, ids: Array) -> Var:
    """Row gather (embedding lookup); gradient scatter-adds into `m`."""
    idx = np.asarray(ids)

    def bw(g):
        gm = np.zeros_like(m.value)
        np.add.at(gm, idx, g)
        return (gm,)

    return Var(m.value[idx], (m,), bw)


def slice_cols(x: Var, start: int, stop: int) -> Var:
    def bw(g):
        gx = np.zeros_like(x.value)
        gx[..., start:stop] = g
        return (gx,)

    return Var(x.value[..., start:stop], (x,), bw)


def concat_last(a: Var, b: Var) -> Var:
    na = a.value.shape[-1]

    def bw(g):
        return g[..., :na], g[..., na:]

    return Var(np.concatenate([a.value, b.value], axis=-1), (a, b), bw)


def reshape(x: Var, shape: tuple[int, ...]) -> Var:
    old = x.value.shape
    return Var(x.value.reshape(shape), (x,), lambda g: (g.reshape(old),))


def softmax_last(x: Var) -> Var:
    s = softmax_lastaxis(x.value)

    def bw(g):
        return (s * (g - np.sum(g * s, axis=-1, keepdims=True)),)

    return Var(s, (x,), bw)


def log_softmax_last(x: Var) -> Var:
    ls = log_softmax_lastaxis(x.value)
    s = np.exp(ls)

    def bw(g):
        return (g - s * np.sum(g, axis=-1, keepdims=True),)

    return Var(ls, (x,), bw)


def sum_last(x: Var) -> Var:
    def bw(g):
        return (np.broadcast_to(g[..., None], x.value.shape).copy(),)

    return Var(x.value.sum(axis=-1), (x,), bw)


def dot_last(x: Var, v: Var) -> Var:
    """Contract the last axis of `x` with vector `v`."""

    def bw(g):
        gx = g[..., None] * v.value
        gv = (g[..., None] * x.value).reshape(-1, x.value.shape[-1]).sum(axis=0)
        return gx, gv

    return Var(x.value @ v.value, (x, v), bw)


def weighted_sum(alpha: Var, h: Var) -> Var:
    """Convex combination of annotation rows: sum_j alpha[..., j] * h[j].

    `h` is either (J, K) shared across the batch or (B, J, K) per-batch.
    """
    if h.value.ndim == 2:

        def bw(g):
            galpha = g @ h.value.T
            a2 = alpha.value.reshape(-1, alpha.value.shape[-1])
            g2 = g.reshape(-1, g.shape[-1])
            return galpha, a2.T @ g2

        return Var(alpha.value @ h.value, (alpha, h), bw)

    def bw(g):
        galpha = np.einsum("bk,bjk->bj", g, h.value)
        gh = alpha.value[..., None] * g[:, None, :]
        return galpha, gh

    return Var(np.einsum("bj,bjk->bk", alpha.value, h.value), (alpha, h), bw)


def masked_mean_rows(h: Var, mask: Array | None) -> Var:
    """Mean over the row axis; with `mask` (B, J) only rows with mask 1 count."""
    if h.value.ndim == 2:
        n = h.value.shape[0]
        return Var(h.value.mean(axis=0), (h,), lambda g: (np.broadcast_to(g / n, h.value.shape).copy(),))
    if mask is None:
        mask = np.ones(h.value.shape[:2])
    counts = mask.sum(axis=1)
    out = np.einsum("bj,bjk->bk", mask, h.value) / counts[:, None]

    def bw(g):
        return (mask[:, :, None] * (g / counts[:, None])[:, None, :],)

    return Var(out, (h,), bw)


def stack_time(items: Sequence[Var]) -> Var:
    """Stack T arrays of shape (B, K) into (B, T, K)."""

    def bw(g):
        return tuple(g[:, t, :] for t in range(len(items)))

    return Var(np.stack([it.value for it in items], axis=1), tuple(items), bw)


# ---------------------------------------------------------------------------
# reverse pass


def backward(seeds: Sequence[tuple[Var, Array]]) -> None:
    """Accumulate gradients into `.grad` of every node reachable from seeds."""
    order: list[Var] = []
    visited: set[int] = set()
    stack: list[tuple[Var, bool]] = [(v, False) for v, _ in seeds]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in visited:
                stack.append((p, False))

    for var, g in seeds:
        g = np.asarray(g, dtype=np.float64)
        var.grad = g if var.grad is None else var.grad + g

    for node in reversed(order):
        if node.grad is None or node.bw is None:
            continue
        for parent, pg in zip(node.parents, node.bw(node.grad)):
            if pg is None:
                continue
            parent.grad = pg if parent.grad is None else parent.grad + pg
