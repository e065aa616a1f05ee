"""Derivatives of composed fields in local or global coordinates.

Two regimes:

* manifold mode (m < n): the network lives in global coordinates and is
  composed with the map, ``u(x) = N(phi(x))``; operators act on local
  coordinates x (plain ``d/dx`` derivatives through the composition).
* transformation mode (m = n): the network is a function of local x, but
  operators act on global y = phi(x).  Derivatives w.r.t. y come from the
  inverse-Jacobian pullback ``grad_y u = J^-T grad_x u``; second
  derivatives apply the same rule to each component of ``grad_y u``.  The
  inverse is formed from the adjugate inside the graph, so J's own
  x-dependence (the curvature of the map) is differentiated too.  phi^-1 is
  never evaluated.
"""
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .geometry import jacobian

MANIFOLD = "manifold"
TRANSFORMATION = "transformation"


class SingularJacobianError(ArithmeticError):
    """|det J| fell below the singularity threshold."""


class DegenerateGeometryError(ArithmeticError):
    """A curve has zero speed where an arc-length derivative was requested."""


@dataclass
class OutputTransform:
    """out_k = N_k(.) * b_k(x) + g_k(x) for each output component k.

    ``distances`` and ``extensions`` hold one entry per output (``None``
    leaves that output untouched / adds nothing).  Extensions are smooth
    functions on the whole reference domain, called as ``g(xs)``.
    """

    distances: list
    extensions: list

    def apply(self, outputs, xs):
        out = []
        for k, n_k in enumerate(outputs):
            b = self.distances[k]
            g = self.extensions[k]
            v = n_k * b(xs) if b is not None else n_k
            if g is not None:
                v = v + g(xs)
            out.append(v)
        return out


def apply_output_transform(outputs, xs, transform):
    return transform.apply(outputs, xs)


class ComposedField:
    """A network wired to a map, optionally with an exact-BC output transform.

    ``network`` is any callable ``inputs -> list of outputs`` (an
    :class:`~geopinn.network.Mlp` or a bound variant).  In manifold mode the
    network sees phi(x); in transformation mode it sees x.
    """

    def __init__(self, network, diffeo, mode=MANIFOLD, transform=None, index=0):
        if mode not in (MANIFOLD, TRANSFORMATION):
            raise ValueError(f"unknown mode {mode!r}")
        self.network = network
        self.diffeo = diffeo
        self.mode = mode
        self.transform = transform
        self.index = index

    def outputs(self, xs, ys=None):
        if self.mode == MANIFOLD:
            if ys is None:
                ys = self.diffeo.map(xs)
            raw = self.network(ys)
        else:
            raw = self.network(list(xs))
        if self.transform is not None:
            raw = self.transform.apply(raw, xs)
        return raw

    def __call__(self, xs, ys=None):
        return self.outputs(xs, ys)[self.index]

    def component(self, index):
        return ComposedField(self.network, self.diffeo, self.mode, self.transform, index)


@dataclass
class DerivBundle:
    value: object
    grad: list
    hess: list
    frame: str
    d: int

    def laplacian(self):
        return _sum([self.hess[i][i] for i in range(self.d)])


def _sum(terms):
    acc = terms[0]
    for t in terms[1:]:
        acc = acc + t
    return acc


def _dot(a, b):
    return _sum([x * y for x, y in zip(a, b)])


# -- local coordinates -------------------------------------------------------

def local_derivatives(u, xs, hessian="full"):
    """Bundle of u and its x-derivatives; ``hessian`` in {"full", "diag", None}."""
    grad = ad.derivatives(u, xs)
    d = len(xs)
    hess = None
    if hessian == "full":
        rows = [ad.derivatives(g, xs) for g in grad]
        hess = [[rows[i][j] for j in range(d)] for i in range(d)]
    elif hessian == "diag":
        hess = [[None] * d for _ in range(d)]
        for i in range(d):
            hess[i][i] = ad.derive(grad[i], xs[i])
    return DerivBundle(u, grad, hess, "local", d)


def local_bundle(field, xs, hessian="full"):
    if field.mode != MANIFOLD:
        raise ValueError("local_bundle needs a manifold-mode field")
    return local_derivatives(field(xs), xs, hessian)


def curve_speed(diffeo, xs, ys=None):
    """|dphi/dx| for a curve (m = 1), as a differentiable quantity."""
    J = jacobian(diffeo, xs, ys)
    sq = _sum([row[0] * row[0] for row in J])
    if np.any(np.asarray(ad.value_of(sq)) == 0.0):
        raise DegenerateGeometryError("curve has zero speed at a sample point")
    return ad.sqrt(sq)


def arclength_derivative_of(u, xs, speed):
    return ad.derive(u, xs[0]) / speed


def arclength_derivative(field, xs):
    """Derivative of the field w.r.t. arc length along a curve."""
    if field.diffeo.m != 1:
        raise ValueError("arc-length derivative needs a 1-D reference domain")
    ys = field.diffeo.map(xs)
    return arclength_derivative_of(field(xs, ys), xs, curve_speed(field.diffeo, xs, ys))


# -- global coordinates ------------------------------------------------------

def inverse_jacobian(J, tol=1e-12):
    """(J^-1, det J) built in the graph; raises if |det J| < ``tol``."""
    n = len(J)
    if any(len(row) != n for row in J):
        raise ValueError("global derivatives need a square Jacobian (m = n)")
    if n == 1:
        det = J[0][0]
    elif n == 2:
        (a, b), (c, d) = J
        det = a * d - b * c
    else:
        raise NotImplementedError("inverse Jacobian is implemented for n <= 2")
    dv = np.abs(np.asarray(ad.value_of(det), dtype=float))
    if np.any(dv < tol):
        bad = int(np.argmin(dv)) if dv.ndim else 0
        raise SingularJacobianError(f"|det J| = {dv.ravel()[bad]:.3e} < {tol:g} at sample {bad}")
    if n == 1:
        return [[1.0 / det]], det
    inv = 1.0 / det
    return [[d * inv, -(b * inv)], [-(c * inv), a * inv]], det


class TransformFrame:
    """Pullback of derivatives to global coordinates at a set of points.

    Build once per evaluation (it computes J and its inverse) and reuse for
    every field living on the same points.
    """

    def __init__(self, diffeo, xs, ys=None, singular_tol=1e-12):
        if diffeo.m != diffeo.n:
            raise ValueError("transformation mode needs m = n")
        self.xs = list(xs)
        self.jac = jacobian(diffeo, self.xs, ys)
        self.jinv, self.det = inverse_jacobian(self.jac, singular_tol)
        self.n = diffeo.n

    def pull(self, local_grad):
        """J^-T applied to a local gradient."""
        return [_dot([self.jinv[i][j] for i in range(self.n)], local_grad) for j in range(self.n)]

    def gradient(self, u):
        return self.pull(ad.derivatives(u, self.xs))

    def hessian(self, u, grad=None):
        g = self.gradient(u) if grad is None else grad
        return [self.pull(ad.derivatives(gj, self.xs)) for gj in g]

    def laplacian(self, u, grad=None):
        g = self.gradient(u) if grad is None else grad
        terms = []
        for j, gj in enumerate(g):
            dg = ad.derivatives(gj, self.xs)
            terms.append(_dot([self.jinv[i][j] for i in range(self.n)], dg))
        return _sum(terms)

    def divergence(self, us):
        if len(us) != self.n:
            raise ValueError(f"divergence needs {self.n} components")
        return _sum([self.gradient(u)[j] for j, u in enumerate(us)])


def _frame(field, xs):
    if field.mode != TRANSFORMATION:
        raise ValueError("global derivatives need a transformation-mode field")
    return TransformFrame(field.diffeo, xs)


def global_gradient(field, xs):
    return _frame(field, xs).gradient(field(xs))


def global_hessian(field, xs):
    return _frame(field, xs).hessian(field(xs))


def global_hessian_diag(field, xs):
    H = global_hessian(field, xs)
    return [H[i][i] for i in range(len(H))]


def global_laplacian(field, xs):
    return _frame(field, xs).laplacian(field(xs))


def global_divergence(fields, xs):
    frame = _frame(fields[0], xs)
    return frame.divergence([f(xs) for f in fields])
