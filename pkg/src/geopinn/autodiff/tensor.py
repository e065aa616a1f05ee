"""Batched reverse-mode engine on numpy arrays.

A :class:`Tensor` node carries a float64 array.  In the PINN code a
"scalar" quantity is a length-N array holding its value at N collocation
points; since points never interact before the loss reduction,
``derive(u, x)`` (the gradient of ``sum(u)`` w.r.t. the leaf ``x``) is the
pointwise derivative.

Backward rules are written with Tensor ops, so gradients are Tensors that
can be differentiated again.  This mirrors the scalar engine's
graph-to-graph contract at array granularity.
"""
from contextlib import contextmanager

import numpy as np

from .. import _kernels as K
from .errors import DomainError

_GRAPH = True


@contextmanager
def no_graph():
    """Ops inside the block produce constants (no graph recorded)."""
    global _GRAPH
    prev = _GRAPH
    _GRAPH = False
    try:
        yield
    finally:
        _GRAPH = prev


class Tensor:
    __slots__ = ("value", "parents", "backward", "requires_grad", "__weakref__")
    __array_priority__ = 1000.0

    def __init__(self, value, parents=(), backward=None, requires_grad=False):
        self.value = value
        self.parents = parents
        self.backward = backward
        self.requires_grad = requires_grad

    @property
    def shape(self):
        return self.value.shape

    @property
    def is_leaf(self):
        return self.requires_grad and not self.parents

    def __repr__(self):
        kind = "var" if self.is_leaf else ("node" if self.requires_grad else "const")
        return f"Tensor({kind}, shape={self.value.shape})"

    def numpy(self):
        return self.value

    __add__ = lambda self, o: add(self, o)
    __radd__ = lambda self, o: add(o, self)
    __sub__ = lambda self, o: sub(self, o)
    __rsub__ = lambda self, o: sub(o, self)
    __mul__ = lambda self, o: mul(self, o)
    __rmul__ = lambda self, o: mul(o, self)
    __truediv__ = lambda self, o: div(self, o)
    __rtruediv__ = lambda self, o: div(o, self)
    __neg__ = lambda self: neg(self)
    __matmul__ = lambda self, o: matmul(self, o)

    def __pow__(self, c):
        if isinstance(c, Tensor):
            return exp(mul(c, log(self)))
        return powc(self, float(c))

    def __rpow__(self, base):
        return exp(mul(self, float(np.log(base))))

    def sin(self):
        return sin(self)

    def cos(self):
        return cos(self)

    def tanh(self):
        return tanh(self)

    def exp(self):
        return exp(self)

    def log(self):
        return log(self)

    def sqrt(self):
        return sqrt(self)

    def sum(self):
        return total(self)

    @property
    def T(self):
        return transpose(self)


def variable(value):
    """Differentiable leaf."""
    return Tensor(np.array(value, dtype=np.float64), requires_grad=True)


def constant(value):
    return Tensor(np.asarray(value, dtype=np.float64))


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


def _node(value, parents, backward):
    if _GRAPH:
        for p in parents:
            if p.requires_grad:
                return Tensor(value, parents, backward, True)
    return Tensor(value)


# -- broadcasting helpers ---------------------------------------------------

def _reduce_to(value, shape):
    if value.shape == shape:
        return value
    nlead = value.ndim - len(shape)
    axes = tuple(range(nlead)) + tuple(
        i + nlead for i, s in enumerate(shape) if s == 1 and value.shape[i + nlead] != 1
    )
    out = value.sum(axis=axes, keepdims=True) if axes else value
    return out.reshape(shape)


def sum_to(x, shape):
    x = as_tensor(x)
    if x.shape == shape:
        return x
    return _node(_reduce_to(x.value, shape), (x,), _bw_sum_to)


def _bw_sum_to(g, out, needs):
    return (broadcast_to(g, out.parents[0].shape),)


def broadcast_to(x, shape):
    x = as_tensor(x)
    if x.shape == shape:
        return x
    return _node(np.broadcast_to(x.value, shape), (x,), _bw_broadcast_to)


def _bw_broadcast_to(g, out, needs):
    return (sum_to(g, out.parents[0].shape),)


# -- arithmetic -------------------------------------------------------------

def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return _node(a.value + b.value, (a, b), _bw_add)


def _bw_add(g, out, needs):
    a, b = out.parents
    return (
        sum_to(g, a.shape) if needs[0] else None,
        sum_to(g, b.shape) if needs[1] else None,
    )


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return _node(a.value - b.value, (a, b), _bw_sub)


def _bw_sub(g, out, needs):
    a, b = out.parents
    return (
        sum_to(g, a.shape) if needs[0] else None,
        neg(sum_to(g, b.shape)) if needs[1] else None,
    )


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return _node(a.value * b.value, (a, b), _bw_mul)


def _bw_mul(g, out, needs):
    a, b = out.parents
    return (
        sum_to(mul(g, b), a.shape) if needs[0] else None,
        sum_to(mul(g, a), b.shape) if needs[1] else None,
    )


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if np.any(b.value == 0.0):
        raise DomainError("division by zero")
    return _node(a.value / b.value, (a, b), _bw_div)


def _bw_div(g, out, needs):
    a, b = out.parents
    ga = div(g, b) if (needs[0] or needs[1]) else None
    return (
        sum_to(ga, a.shape) if needs[0] else None,
        neg(sum_to(mul(ga, out), b.shape)) if needs[1] else None,
    )


def neg(a):
    a = as_tensor(a)
    return _node(-a.value, (a,), _bw_neg)


def _bw_neg(g, out, needs):
    return (neg(g),)


def powc(a, c):
    a = as_tensor(a)
    if c == 1.0:
        return a
    v = a.value
    if not float(c).is_integer() and np.any(v < 0.0):
        raise DomainError("negative base with non-integer exponent")
    if c < 1.0 and np.any(v == 0.0):
        raise DomainError("0 ** c with c < 1 is not differentiable")
    return _node(v * v if c == 2.0 else v ** c, (a,), _PowBackward(c))


class _PowBackward:
    __slots__ = ("c",)

    def __init__(self, c):
        self.c = c

    def __call__(self, g, out, needs):
        (a,) = out.parents
        c = self.c
        if c == 2.0:
            return (mul(g, mul(a, 2.0)),)
        return (mul(g, mul(powc(a, c - 1.0), c)),)


# -- elementary functions ---------------------------------------------------

def sin(a):
    a = as_tensor(a)
    return _node(np.sin(a.value), (a,), _bw_sin)


def _bw_sin(g, out, needs):
    return (mul(g, cos(out.parents[0])),)


def cos(a):
    a = as_tensor(a)
    return _node(np.cos(a.value), (a,), _bw_cos)


def _bw_cos(g, out, needs):
    return (neg(mul(g, sin(out.parents[0]))),)


def tanh(a):
    a = as_tensor(a)
    return _node(np.tanh(a.value), (a,), _bw_tanh)


def _bw_tanh(g, out, needs):
    return (tanh_grad(g, out),)


def tanh_grad(g, t):
    """Fused ``g * (1 - t**2)``; the adjoint rule of tanh."""
    g, t = as_tensor(g), as_tensor(t)
    return _node(K.tanh_grad(g.value, t.value), (g, t), _bw_tanh_grad)


def _bw_tanh_grad(gout, out, needs):
    g, t = out.parents
    dg = tanh_grad(gout, t) if needs[0] else None
    dt = None
    if needs[1]:
        gout = as_tensor(gout)
        if gout.shape == g.shape == t.shape:
            dt = _node(K.tanh_grad_t(g.value, gout.value, t.value), (g, gout, t), _bw_tanh_grad_t)
        else:
            dt = sum_to(mul(mul(g, gout), mul(t, -2.0)), t.shape)
    return (dg, dt)


def _bw_tanh_grad_t(h, out, needs):
    # out = -2 * g * gout * t
    g, gout, t = out.parents
    return (
        mul(h, mul(mul(gout, t), -2.0)) if needs[0] else None,
        mul(h, mul(mul(g, t), -2.0)) if needs[1] else None,
        mul(h, mul(mul(g, gout), -2.0)) if needs[2] else None,
    )


def exp(a):
    a = as_tensor(a)
    return _node(np.exp(a.value), (a,), _bw_exp)


def _bw_exp(g, out, needs):
    return (mul(g, out),)


def log(a):
    a = as_tensor(a)
    if np.any(a.value <= 0.0):
        raise DomainError("log of non-positive value")
    return _node(np.log(a.value), (a,), _bw_log)


def _bw_log(g, out, needs):
    return (div(g, out.parents[0]),)


def sqrt(a):
    a = as_tensor(a)
    if np.any(a.value <= 0.0):
        raise DomainError("sqrt of non-positive value")
    return _node(np.sqrt(a.value), (a,), _bw_sqrt)


def _bw_sqrt(g, out, needs):
    return (div(g, mul(out, 2.0)),)


# -- linear algebra and shape ops -------------------------------------------

def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return _node(a.value @ b.value, (a, b), _bw_matmul)


def _bw_matmul(g, out, needs):
    a, b = out.parents
    return (
        matmul(g, transpose(b)) if needs[0] else None,
        matmul(transpose(a), g) if needs[1] else None,
    )


def transpose(a):
    a = as_tensor(a)
    return _node(a.value.T, (a,), _bw_transpose)


def _bw_transpose(g, out, needs):
    return (transpose(g),)


def total(a):
    """Sum of all entries (0-d result)."""
    a = as_tensor(a)
    return _node(np.asarray(a.value.sum()), (a,), _bw_total)


def _bw_total(g, out, needs):
    return (broadcast_to(g, out.parents[0].shape),)


def mean(a):
    a = as_tensor(a)
    return mul(total(a), 1.0 / a.value.size)


def column(a, j):
    """``a[:, j]`` for a 2-D tensor."""
    a = as_tensor(a)
    return _node(np.ascontiguousarray(a.value[:, j]), (a,), _ColumnBackward(j))


class _ColumnBackward:
    __slots__ = ("j",)

    def __init__(self, j):
        self.j = j

    def __call__(self, g, out, needs):
        return (embed_column(g, self.j, out.parents[0].shape[1]),)


def embed_column(g, j, k):
    """(N,) -> (N, k) with ``g`` in column ``j`` and zeros elsewhere."""
    g = as_tensor(g)
    v = np.zeros(g.shape + (k,))
    v[:, j] = g.value
    return _node(v, (g,), _EmbedBackward(j))


class _EmbedBackward:
    __slots__ = ("j",)

    def __init__(self, j):
        self.j = j

    def __call__(self, g, out, needs):
        return (column(g, self.j),)


def stack_columns(cols):
    """List of (N,) tensors -> (N, k)."""
    cols = [as_tensor(c) for c in cols]
    n = max((c.value.size for c in cols), default=0)
    v = np.empty((n, len(cols)))
    for j, c in enumerate(cols):
        v[:, j] = c.value
    return _node(v, tuple(cols), _bw_stack)


def _bw_stack(g, out, needs):
    return tuple(column(g, j) if need else None for j, need in enumerate(needs))


# -- differentiation --------------------------------------------------------

def _toposort(output):
    order = []
    seen = set()
    stack = [(output, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        key = id(node)
        if key in seen:
            continue
        seen.add(key)
        stack.append((node, True))
        for p in node.parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def grad(output, wrt, seed=None, create_graph=True):
    """Adjoints of ``output`` (seeded with ``seed``) w.r.t. the tensors in ``wrt``.

    With ``create_graph`` the results are differentiable Tensors; without,
    they are constants (cheaper, used for the final parameter gradient).
    """
    wrt = list(wrt)
    zeros = [Tensor(np.zeros(w.shape)) for w in wrt]
    if not output.requires_grad:
        return zeros
    wrt_ids = {id(w) for w in wrt}
    order = _toposort(output)
    relevant = set()
    for node in order:
        k = id(node)
        if k in wrt_ids:
            relevant.add(k)
            continue
        for p in node.parents:
            if id(p) in relevant:
                relevant.add(k)
                break
    if id(output) not in relevant:
        return zeros

    global _GRAPH
    prev = _GRAPH
    _GRAPH = create_graph
    try:
        if seed is None:
            seed = Tensor(np.ones(output.shape))
        adj = {id(output): as_tensor(seed)}
        found = {}
        for node in reversed(order):
            k = id(node)
            g = adj.pop(k, None)
            if g is None:
                continue
            if k in wrt_ids:
                found[k] = g
            if not node.parents:
                continue
            needs = tuple(id(p) in relevant for p in node.parents)
            grads = node.backward(g, node, needs)
            for p, gp, need in zip(node.parents, grads, needs):
                if not need or gp is None:
                    continue
                kp = id(p)
                prev_g = adj.get(kp)
                adj[kp] = gp if prev_g is None else add(prev_g, gp)
    finally:
        _GRAPH = prev
    out = []
    for w, z in zip(wrt, zeros):
        g = found.get(id(w))
        if g is None:
            out.append(z)
        else:
            out.append(g if g.shape == w.shape else broadcast_to(g, w.shape))
    return out


def derivatives(output, wrts):
    """Pointwise derivatives of a per-point quantity w.r.t. per-point leaves."""
    output = as_tensor(output)
    return grad(output, wrts)


def derive(output, wrt):
    return derivatives(output, [wrt])[0]
