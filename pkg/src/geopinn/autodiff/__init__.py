"""Differentiation engines and engine-agnostic elementary functions.

Geometry, pullback and loss code is written once against the functions
here; it then runs unchanged on

* :class:`DiffScalar` (one collocation point, scalar expression graph),
* :class:`Tensor` (all collocation points at once, batched arrays), or
* plain floats / numpy arrays (no differentiation, e.g. plotting grids).
"""
import numpy as np

from . import scalar as _scalar
from . import tensor as _tensor
from .errors import ContextError, DomainError
from .scalar import Checkpoint, DiffContext, DiffScalar, gradient, gradient_array
from .tensor import Tensor

__all__ = [
    "Checkpoint", "ContextError", "DiffContext", "DiffScalar", "DomainError",
    "Tensor", "cos", "derivatives", "derive", "exp", "gradient",
    "gradient_array", "is_traced", "log", "sin", "sqrt", "tanh", "value_of",
]


def is_traced(x):
    return isinstance(x, (DiffScalar, Tensor))


def value_of(x):
    """Numeric value of a node (float or ndarray)."""
    if isinstance(x, DiffScalar):
        return x.value
    if isinstance(x, Tensor):
        return x.value
    return x


def _unary(name, npfn):
    def fn(x):
        if isinstance(x, (DiffScalar, Tensor)):
            return getattr(x, name)()
        if name in ("log", "sqrt") and np.any(np.asarray(x) <= 0.0):
            raise DomainError(f"{name} of non-positive value")
        return npfn(x)

    fn.__name__ = name
    return fn


sin = _unary("sin", np.sin)
cos = _unary("cos", np.cos)
tanh = _unary("tanh", np.tanh)
exp = _unary("exp", np.exp)
log = _unary("log", np.log)
sqrt = _unary("sqrt", np.sqrt)


def _zero_like(wrt):
    if isinstance(wrt, DiffScalar):
        return wrt.ctx.lift(0.0)
    if isinstance(wrt, Tensor):
        return _tensor.constant(np.zeros(wrt.shape))
    return 0.0


def derivatives(output, wrts):
    """Differentiable derivatives of ``output`` w.r.t. each leaf in ``wrts``.

    Works pointwise for batched tensors.  Untraced outputs (plain numbers)
    have zero derivative.
    """
    wrts = list(wrts)
    if isinstance(output, DiffScalar):
        return _scalar.derivatives(output, wrts)
    if isinstance(output, Tensor):
        return _tensor.derivatives(output, wrts)
    return [_zero_like(w) for w in wrts]


def derive(output, wrt):
    return derivatives(output, [wrt])[0]
