"""Scalar expression graph with graph-to-graph differentiation.

Every arithmetic operation on :class:`DiffScalar` records a node in its
:class:`DiffContext`.  :func:`derive` differentiates by *building new nodes*
in the same context, so derivatives are themselves differentiable and can be
nested to any order.  :func:`gradient` is the purely numeric reverse sweep
used when only the values of first derivatives are needed.

A context can be checkpointed and rolled back, which bounds memory when a
loss is accumulated point by point::

    ctx = DiffContext()
    x = ctx.variable(0.3)
    cp = ctx.checkpoint()
    y = (x * x).sin()
    d2 = derive(derive(y, x), x)
    ctx.rollback(cp)          # y and d2 are now stale handles
"""
import math

import numpy as np

from .. import _kernels as K
from .errors import ContextError, DomainError


class Checkpoint:
    __slots__ = ("size", "generation")

    def __init__(self, size, generation):
        self.size = size
        self.generation = generation

    def __repr__(self):
        return f"Checkpoint(size={self.size}, generation={self.generation})"


class DiffContext:
    """Node storage for one expression graph.

    Nodes live in parallel lists (op code, operand ids, value, constant
    parameter, birth generation).  Node ids are dense and increase in
    creation order, so ids are already a topological order.
    """

    def __init__(self):
        self._op = []
        self._a = []
        self._b = []
        self._val = []
        self._param = []
        self._born = []
        self._gen = 0
        self._zero = None
        self._one = None

    def __len__(self):
        return len(self._op)

    @property
    def generation(self):
        return self._gen

    def _push(self, op, a, b, value, param=0.0):
        if not math.isfinite(value):
            raise DomainError(f"{K.OP_NAMES[op]} produced non-finite value {value!r}")
        i = len(self._op)
        self._op.append(op)
        self._a.append(a)
        self._b.append(b)
        self._val.append(value)
        self._param.append(param)
        self._born.append(self._gen)
        return DiffScalar(self, i, self._gen, value)

    def lift(self, c):
        """Constant node."""
        c = float(c)
        if c == 0.0 and self._zero is not None and self._alive(self._zero):
            return self._zero
        if c == 1.0 and self._one is not None and self._alive(self._one):
            return self._one
        node = self._push(K.CONST, -1, -1, c)
        if c == 0.0 and math.copysign(1.0, c) > 0:
            self._zero = node
        elif c == 1.0:
            self._one = node
        return node

    def variable(self, x0):
        """Differentiable leaf."""
        return self._push(K.VAR, -1, -1, float(x0))

    def variables(self, values):
        return [self.variable(v) for v in np.asarray(values, dtype=float).ravel()]

    def checkpoint(self):
        return Checkpoint(len(self._op), self._gen)

    def rollback(self, cp):
        """Drop every node recorded after ``cp``."""
        if cp.size > len(self._op):
            raise ContextError("checkpoint is newer than the current graph")
        del self._op[cp.size:]
        del self._a[cp.size:]
        del self._b[cp.size:]
        del self._val[cp.size:]
        del self._param[cp.size:]
        del self._born[cp.size:]
        self._gen += 1

    def _alive(self, s):
        return s.id < len(self._op) and self._born[s.id] == s.gen

    def _handle(self, i):
        return DiffScalar(self, i, self._born[i], self._val[i])

    def arrays(self):
        """Node table as numpy arrays (op, a, b, val, param)."""
        return (
            np.asarray(self._op, dtype=np.int64),
            np.asarray(self._a, dtype=np.int64),
            np.asarray(self._b, dtype=np.int64),
            np.asarray(self._val, dtype=np.float64),
            np.asarray(self._param, dtype=np.float64),
        )

    def is_const(self, s):
        return self._op[s.id] == K.CONST

    def is_leaf(self, s):
        return self._op[s.id] == K.VAR


class DiffScalar:
    """Handle to one node of a :class:`DiffContext`."""

    __slots__ = ("ctx", "id", "gen", "value")

    def __init__(self, ctx, id, gen, value):
        self.ctx = ctx
        self.id = id
        self.gen = gen
        self.value = value

    def __repr__(self):
        return f"DiffScalar({self.value!r}, id={self.id})"

    def __float__(self):
        return float(self.value)

    # -- helpers ---------------------------------------------------------
    def _check(self):
        if not self.ctx._alive(self):
            raise ContextError(f"stale DiffScalar handle (node {self.id} was rolled back)")

    def _coerce(self, other):
        if isinstance(other, DiffScalar):
            if other.ctx is not self.ctx:
                raise ContextError("cannot mix DiffScalars from different contexts")
            other._check()
            return other
        return self.ctx.lift(other)

    def _isconst(self, c):
        return self.ctx._op[self.id] == K.CONST and self.value == c

    # -- arithmetic ------------------------------------------------------
    def __add__(self, other):
        self._check()
        o = self._coerce(other)
        if o._isconst(0.0):
            return self
        if self._isconst(0.0):
            return o
        return self.ctx._push(K.ADD, self.id, o.id, self.value + o.value)

    def __radd__(self, other):
        return self._coerce(other).__add__(self)

    def __sub__(self, other):
        self._check()
        o = self._coerce(other)
        if o._isconst(0.0):
            return self
        if self._isconst(0.0):
            return -o
        return self.ctx._push(K.SUB, self.id, o.id, self.value - o.value)

    def __rsub__(self, other):
        return self._coerce(other).__sub__(self)

    def __mul__(self, other):
        self._check()
        o = self._coerce(other)
        if o._isconst(1.0):
            return self
        if self._isconst(1.0):
            return o
        if o._isconst(0.0) or self._isconst(0.0):
            return self.ctx.lift(0.0)
        return self.ctx._push(K.MUL, self.id, o.id, self.value * o.value)

    def __rmul__(self, other):
        return self._coerce(other).__mul__(self)

    def __truediv__(self, other):
        self._check()
        o = self._coerce(other)
        if o.value == 0.0:
            raise DomainError("division by zero")
        if o._isconst(1.0):
            return self
        if self._isconst(0.0):
            return self
        return self.ctx._push(K.DIV, self.id, o.id, self.value / o.value)

    def __rtruediv__(self, other):
        return self._coerce(other).__truediv__(self)

    def __neg__(self):
        self._check()
        if self._isconst(0.0):
            return self
        if self.ctx._op[self.id] == K.NEG:
            return self.ctx._handle(self.ctx._a[self.id])
        return self.ctx._push(K.NEG, self.id, -1, -self.value)

    def __pos__(self):
        return self

    def __pow__(self, other):
        self._check()
        if isinstance(other, DiffScalar):
            o = self._coerce(other)
            if self.ctx._op[o.id] != K.CONST:
                if self.value <= 0.0:
                    raise DomainError("x ** y with variable y needs x > 0")
                return (o * self.log()).exp()
            other = o.value
        c = float(other)
        if c == 1.0:
            return self
        if c == 0.0:
            return self.ctx.lift(1.0)
        x = self.value
        if x < 0.0 and not c.is_integer():
            raise DomainError(f"negative base {x!r} with non-integer exponent {c!r}")
        if x == 0.0 and c < 1.0:
            raise DomainError("0 ** c with c < 1 is not differentiable")
        try:
            v = x ** c
        except (OverflowError, ZeroDivisionError) as exc:
            raise DomainError(str(exc)) from None
        return self.ctx._push(K.POWC, self.id, -1, v, c)

    def __rpow__(self, other):
        base = float(other)
        if base <= 0.0:
            raise DomainError("c ** x needs c > 0")
        return (self * math.log(base)).exp()

    # -- elementary functions -------------------------------------------
    def _unary(self, op, fn):
        self._check()
        try:
            v = fn(self.value)
        except (OverflowError, ValueError) as exc:
            raise DomainError(f"{K.OP_NAMES[op]}({self.value!r}): {exc}") from None
        return self.ctx._push(op, self.id, -1, v)

    def sin(self):
        return self._unary(K.SIN, math.sin)

    def cos(self):
        return self._unary(K.COS, math.cos)

    def tanh(self):
        return self._unary(K.TANH, math.tanh)

    def exp(self):
        return self._unary(K.EXP, math.exp)

    def log(self):
        if self.value <= 0.0:
            raise DomainError(f"log of non-positive value {self.value!r}")
        return self._unary(K.LOG, math.log)

    def sqrt(self):
        if self.value <= 0.0:
            raise DomainError(f"sqrt of non-positive value {self.value!r}")
        return self._unary(K.SQRT, math.sqrt)


def _check_wrt(output, wrts):
    if not isinstance(output, DiffScalar):
        raise TypeError("output must be a DiffScalar")
    output._check()
    ctx = output.ctx
    for w in wrts:
        if not isinstance(w, DiffScalar) or w.ctx is not ctx:
            raise ContextError("derivative target lives in a different context")
        w._check()
        if ctx._op[w.id] != K.VAR:
            raise ContextError("can only differentiate with respect to variables")
    return ctx


def derivatives(output, wrts):
    """Symbolic derivatives of ``output`` w.r.t. each leaf in ``wrts``.

    One reverse sweep builds the adjoint graph; each returned DiffScalar is
    a node in the same context and can be differentiated again.
    """
    wrts = list(wrts)
    ctx = _check_wrt(output, wrts)
    if not wrts:
        return []
    zero = ctx.lift(0.0)
    stop = min(w.id for w in wrts)
    if output.id < stop:
        return [zero] * len(wrts)
    op, a, b, _, _ = ctx.arrays()
    mask = K.dependency_mask(op, a, b, np.array([w.id for w in wrts], dtype=np.int64), output.id)
    if not mask[output.id]:
        return [zero] * len(wrts)

    opl, al, bl, param = ctx._op, ctx._a, ctx._b, ctx._param
    handle = ctx._handle
    adj = {output.id: ctx.lift(1.0)}
    wanted = {w.id for w in wrts}
    found = {}

    def acc(j, contrib):
        if not mask[j]:
            return
        prev = adj.get(j)
        adj[j] = contrib if prev is None else prev + contrib

    for i in range(output.id, stop - 1, -1):
        g = adj.pop(i, None)
        if g is None:
            continue
        if i in wanted:
            found[i] = g
        o = opl[i]
        if o <= K.VAR:
            continue
        ia, ib = al[i], bl[i]
        if o == K.ADD:
            acc(ia, g)
            acc(ib, g)
        elif o == K.SUB:
            acc(ia, g)
            if mask[ib]:
                acc(ib, -g)
        elif o == K.MUL:
            if mask[ia]:
                acc(ia, g * handle(ib))
            if mask[ib]:
                acc(ib, g * handle(ia))
        elif o == K.DIV:
            B = handle(ib)
            if mask[ia]:
                acc(ia, g / B)
            if mask[ib]:
                acc(ib, -(g * handle(i) / B))
        elif o == K.NEG:
            acc(ia, -g)
        elif o == K.SIN:
            acc(ia, g * handle(ia).cos())
        elif o == K.COS:
            acc(ia, -(g * handle(ia).sin()))
        elif o == K.TANH:
            t = handle(i)
            acc(ia, g * (1.0 - t * t))
        elif o == K.EXP:
            acc(ia, g * handle(i))
        elif o == K.LOG:
            acc(ia, g / handle(ia))
        elif o == K.SQRT:
            acc(ia, g / (2.0 * handle(i)))
        elif o == K.POWC:
            c = param[i]
            acc(ia, g * (c * handle(ia) ** (c - 1.0)))
    return [found.get(w.id, zero) for w in wrts]


def derive(output, wrt):
    """d(output)/d(wrt) as a differentiable DiffScalar."""
    if not isinstance(output, DiffScalar):
        if isinstance(wrt, DiffScalar):
            return wrt.ctx.lift(0.0)
        raise TypeError("derive needs DiffScalar arguments")
    return derivatives(output, [wrt])[0]


def gradient(output, wrts):
    """Numeric partials of ``output`` w.r.t. each leaf, one reverse sweep."""
    wrts = list(wrts)
    if not isinstance(output, DiffScalar):
        return [0.0] * len(wrts)
    ctx = _check_wrt(output, wrts)
    if not wrts:
        return []
    stop = min(w.id for w in wrts)
    if output.id < stop:
        return [0.0] * len(wrts)
    op, a, b, val, param = ctx.arrays()
    adj = K.reverse_sweep(op, a, b, val, param, output.id, stop)
    return [float(adj[w.id]) if w.id <= output.id else 0.0 for w in wrts]


def gradient_array(output, first_id, count):
    """Partials w.r.t. a contiguous block of leaves ``first_id .. first_id+count-1``.

    Faster than :func:`gradient` when the leaves are e.g. the parameters of
    a network created in one go.
    """
    ctx = output.ctx
    out = np.zeros(count)
    if output.id < first_id:
        return out
    op, a, b, val, param = ctx.arrays()
    adj = K.reverse_sweep(op, a, b, val, param, output.id, first_id)
    hi = min(first_id + count, output.id + 1)
    out[: hi - first_id] = adj[first_id:hi]
    return out
