"""Reverse-mode automatic differentiation on a linear tape.

Designed for small dense networks: values are float64 numpy arrays, the graph
is rebuilt on every forward pass, and gradients come from a single reverse
sweep over the tape. Only differentiable operands become tape nodes; plain
numpy arrays passed to an op are treated as constants and never visited by
the backward pass.
"""
from __future__ import annotations

import numpy as np

from .errors import UsageError


class Node:
    """One tape entry: an array value plus vector-Jacobian products for its parents."""

    __slots__ = ("value", "parents", "vjps", "param", "index")

    def __init__(self, value, parents=(), vjps=(), param=None):
        self.value = value
        self.parents = parents
        self.vjps = vjps
        self.param = param
        self.index = -1


class Tape:
    """Append-only operation record; topological order holds by construction."""

    def __init__(self):
        self.nodes = []
        self.last_backward_visits = 0

    def _add(self, node):
        node.index = len(self.nodes)
        self.nodes.append(node)
        return node

    def __len__(self):
        return len(self.nodes)


def value_of(x):
    """Underlying numpy array of a node or constant."""
    return x.value if isinstance(x, Node) else x


def _record(tape, value, pairs, param=None):
    # pairs: iterable of (operand, vjp); constants contribute no parent edge
    parents = []
    vjps = []
    for operand, vjp in pairs:
        if isinstance(operand, Node):
            parents.append(operand)
            vjps.append(vjp)
    return tape._add(Node(value, tuple(parents), tuple(vjps), param))


def _unbroadcast(g, shape):
    """Sum gradient g down to a broadcast operand's shape."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def leaf(tape, param):
    """Place a trainable parameter on the tape."""
    return tape._add(Node(param.value, (), (), param))


def matmul(tape, a, b):
    av, bv = value_of(a), value_of(b)
    out = av @ bv
    return _record(tape, out, [
        (a, lambda g, bv=bv: g @ bv.T),
        (b, lambda g, av=av: av.T @ g),
    ])


def add(tape, a, b):
    av, bv = value_of(a), value_of(b)
    out = av + bv
    return _record(tape, out, [
        (a, lambda g, s=np.shape(av): _unbroadcast(g, s)),
        (b, lambda g, s=np.shape(bv): _unbroadcast(g, s)),
    ])


def sub(tape, a, b):
    av, bv = value_of(a), value_of(b)
    out = av - bv
    return _record(tape, out, [
        (a, lambda g, s=np.shape(av): _unbroadcast(g, s)),
        (b, lambda g, s=np.shape(bv): -_unbroadcast(g, s)),
    ])


def mul(tape, a, b):
    av, bv = value_of(a), value_of(b)
    out = av * bv
    return _record(tape, out, [
        (a, lambda g, o=bv, s=np.shape(av): _unbroadcast(g * o, s)),
        (b, lambda g, o=av, s=np.shape(bv): _unbroadcast(g * o, s)),
    ])


def scale(tape, a, s: float):
    out = value_of(a) * s
    return _record(tape, out, [(a, lambda g, s=s: g * s)])


def neg(tape, a):
    return _record(tape, -value_of(a), [(a, lambda g: -g)])


def exp(tape, a):
    out = np.exp(value_of(a))
    return _record(tape, out, [(a, lambda g, o=out: g * o)])


def tanh(tape, a):
    out = np.tanh(value_of(a))
    return _record(tape, out, [(a, lambda g, o=out: g * (1.0 - o * o))])


def relu(tape, a):
    av = value_of(a)
    out = np.maximum(av, 0.0)
    return _record(tape, out, [(a, lambda g, m=(av > 0): g * m)])


def absolute(tape, a):
    # subgradient at 0 is 0 (np.sign(0) == 0)
    av = value_of(a)
    return _record(tape, np.abs(av), [(a, lambda g, s=np.sign(av): g * s)])


def total(tape, a):
    av = value_of(a)
    out = np.asarray(av.sum())
    return _record(tape, out, [(a, lambda g, s=av.shape: np.broadcast_to(g, s).copy() if np.ndim(g) else np.full(s, g))])


def mean(tape, a):
    av = value_of(a)
    n = av.size
    out = np.asarray(av.mean())
    return _record(tape, out, [(a, lambda g, s=av.shape, n=n: np.full(s, float(g) / n))])


def concat(tape, parts, axis=1):
    values = [value_of(p) for p in parts]
    out = np.concatenate(values, axis=axis)
    pairs = []
    offset = 0
    for p, v in zip(parts, values):
        width = v.shape[axis]
        sl = [slice(None)] * v.ndim
        sl[axis] = slice(offset, offset + width)
        pairs.append((p, lambda g, sl=tuple(sl): g[sl]))
        offset += width
    return _record(tape, out, pairs)


def take_per_row(tape, a, idx):
    """Select value[i, idx[i]] for each row i; gradient scatters back."""
    av = value_of(a)
    rows = np.arange(av.shape[0])
    out = av[rows, idx]

    def vjp(g, shape=av.shape, rows=rows, idx=np.asarray(idx)):
        full = np.zeros(shape)
        full[rows, idx] = g
        return full

    return _record(tape, out, [(a, vjp)])


def gaussian_reparam_sample(tape, mu, log_sigma, rng):
    """z = mu + exp(log_sigma) * xi with xi ~ N(0, 1), differentiable in both args.

    A fresh noise draw is taken per call; shapes broadcast (e.g. a (batch, l)
    mean against an (l,) log-sigma vector).
    """
    shape = np.broadcast_shapes(np.shape(value_of(mu)), np.shape(value_of(log_sigma)))
    xi = rng.standard_normal(shape)
    return add(tape, mu, mul(tape, exp(tape, log_sigma), xi))


def backward(tape, loss, params=None):
    """Reverse sweep from a scalar loss node.

    Returns a dict mapping Parameter -> gradient array. Parameters listed in
    ``params`` but not reached through the tape map to zeros. The number of
    visited nodes is stored on ``tape.last_backward_visits``.
    """
    if not isinstance(loss, Node):
        raise UsageError("loss must be a tape node")
    lv = loss.value
    if np.size(lv) != 1:
        raise UsageError(f"loss must be scalar, got shape {np.shape(lv)}")
    pending = {loss.index: np.ones_like(lv)}
    grads = {}
    visits = 0
    for i in range(loss.index, -1, -1):
        g = pending.pop(i, None)
        if g is None:
            continue
        visits += 1
        node = tape.nodes[i]
        if node.param is not None:
            if node.param in grads:
                grads[node.param] = grads[node.param] + g
            else:
                grads[node.param] = g
        for parent, vjp in zip(node.parents, node.vjps):
            pg = vjp(g)
            j = parent.index
            if j in pending:
                pending[j] = pending[j] + pg
            else:
                pending[j] = pg
    tape.last_backward_visits = visits
    if params is not None:
        for p in params:
            if p not in grads:
                grads[p] = np.zeros_like(p.value)
    return grads
