"""Hot loops: tape sweeps for the scalar engine and fused tanh kernels.

Every kernel has a numba-compiled version and a plain numpy/Python version
with identical semantics.  Set ``GEOPINN_DISABLE_NUMBA=1`` to force the
fallback path (useful for debugging and for the benchmark in
``benchmarks/bench_kernels.py``).
"""
import os

import numpy as np

# Node op codes shared by the scalar engine and the tape kernels.
CONST = 0
VAR = 1
ADD = 2
SUB = 3
MUL = 4
DIV = 5
NEG = 6
SIN = 7
COS = 8
TANH = 9
EXP = 10
LOG = 11
SQRT = 12
POWC = 13

OP_NAMES = {
    CONST: "const", VAR: "var", ADD: "add", SUB: "sub", MUL: "mul",
    DIV: "div", NEG: "neg", SIN: "sin", COS: "cos", TANH: "tanh",
    EXP: "exp", LOG: "log", SQRT: "sqrt", POWC: "powc",
}


def _want_numba():
    if os.environ.get("GEOPINN_DISABLE_NUMBA", "").strip() not in ("", "0"):
        return False
    try:
        import numba  # noqa: F401
    except ImportError:
        return False
    return True


USE_NUMBA = _want_numba()


def py_dependency_mask(op, a, b, starts, stop):
    mask = np.zeros(stop + 1, dtype=np.bool_)
    lo = stop + 1
    for s in starts:
        if s <= stop:
            mask[s] = True
            lo = min(lo, s)
    for i in range(lo + 1, stop + 1):
        if mask[i]:
            continue
        o = op[i]
        if o == CONST or o == VAR:
            continue
        if mask[a[i]] or (b[i] >= 0 and mask[b[i]]):
            mask[i] = True
    return mask


def py_reverse_sweep(op, a, b, val, param, out_id, stop_id):
    """Numeric adjoints of node ``out_id`` w.r.t. every node in [stop_id, out_id]."""
    adj = np.zeros(out_id + 1)
    adj[out_id] = 1.0
    for i in range(out_id, stop_id - 1, -1):
        g = adj[i]
        if g == 0.0:
            continue
        o = op[i]
        if o <= VAR:
            continue
        ia = a[i]
        ib = b[i]
        if o == ADD:
            adj[ia] += g
            adj[ib] += g
        elif o == SUB:
            adj[ia] += g
            adj[ib] -= g
        elif o == MUL:
            adj[ia] += g * val[ib]
            adj[ib] += g * val[ia]
        elif o == DIV:
            adj[ia] += g / val[ib]
            adj[ib] -= g * val[i] / val[ib]
        elif o == NEG:
            adj[ia] -= g
        elif o == SIN:
            adj[ia] += g * np.cos(val[ia])
        elif o == COS:
            adj[ia] -= g * np.sin(val[ia])
        elif o == TANH:
            adj[ia] += g * (1.0 - val[i] * val[i])
        elif o == EXP:
            adj[ia] += g * val[i]
        elif o == LOG:
            adj[ia] += g / val[ia]
        elif o == SQRT:
            adj[ia] += 0.5 * g / val[i]
        elif o == POWC:
            c = param[i]
            adj[ia] += g * c * val[ia] ** (c - 1.0)
    return adj


def py_forward_sweep(op, a, b, val, param, start, stop):
    """Recompute node values in [start, stop] from their operands (in place)."""
    for i in range(start, stop + 1):
        o = op[i]
        if o <= VAR:
            continue
        x = val[a[i]]
        if o == ADD:
            val[i] = x + val[b[i]]
        elif o == SUB:
            val[i] = x - val[b[i]]
        elif o == MUL:
            val[i] = x * val[b[i]]
        elif o == DIV:
            val[i] = x / val[b[i]]
        elif o == NEG:
            val[i] = -x
        elif o == SIN:
            val[i] = np.sin(x)
        elif o == COS:
            val[i] = np.cos(x)
        elif o == TANH:
            val[i] = np.tanh(x)
        elif o == EXP:
            val[i] = np.exp(x)
        elif o == LOG:
            val[i] = np.log(x)
        elif o == SQRT:
            val[i] = np.sqrt(x)
        elif o == POWC:
            val[i] = x ** param[i]
    return val


def py_tanh_grad(g, t):
    return g * (1.0 - t * t)


def py_tanh_grad_t(g, gout, t):
    return -2.0 * g * gout * t


if USE_NUMBA:
    import numba

    _jit = numba.njit(cache=True, nogil=True)

    dependency_mask = _jit(py_dependency_mask)
    reverse_sweep = _jit(py_reverse_sweep)
    forward_sweep = _jit(py_forward_sweep)

    @_jit
    def _tanh_grad_flat(g, t, out):
        for i in range(out.size):
            ti = t[i]
            out[i] = g[i] * (1.0 - ti * ti)

    @_jit
    def _tanh_grad_t_flat(g, gout, t, out):
        for i in range(out.size):
            out[i] = -2.0 * g[i] * gout[i] * t[i]

    def tanh_grad(g, t):
        if g.shape != t.shape:
            return py_tanh_grad(g, t)
        g = np.ascontiguousarray(g)
        t = np.ascontiguousarray(t)
        out = np.empty_like(t)
        _tanh_grad_flat(g.ravel(), t.ravel(), out.ravel())
        return out

    def tanh_grad_t(g, gout, t):
        if not (g.shape == gout.shape == t.shape):
            return py_tanh_grad_t(g, gout, t)
        g = np.ascontiguousarray(g)
        gout = np.ascontiguousarray(gout)
        t = np.ascontiguousarray(t)
        out = np.empty_like(t)
        _tanh_grad_t_flat(g.ravel(), gout.ravel(), t.ravel(), out.ravel())
        return out

else:
    dependency_mask = py_dependency_mask
    reverse_sweep = py_reverse_sweep
    forward_sweep = py_forward_sweep
    tanh_grad = py_tanh_grad
    tanh_grad_t = py_tanh_grad_t
