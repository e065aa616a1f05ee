"""Reference domains, collocation sampling, maps of the reference domain and
distance functions that vanish on its boundary."""
import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import tensor as T

INTERVAL = "interval"
SQUARE = "square"


class DiffeomorphismError(ValueError):
    """A map failed the det J > 0 check at a sample point."""


@dataclass(frozen=True)
class ReferenceDomain:
    kind: str = SQUARE

    def __post_init__(self):
        if self.kind not in (INTERVAL, SQUARE):
            raise ValueError(f"unknown reference domain {self.kind!r}")

    @property
    def dim(self):
        return 1 if self.kind == INTERVAL else 2


def unit_interval():
    return ReferenceDomain(INTERVAL)


def unit_square():
    return ReferenceDomain(SQUARE)


# -- sampling ---------------------------------------------------------------

def sample_interior(dom, n, strategy="grid", seed=0):
    """``n`` points strictly inside the reference domain, shape (n, dim).

    ``grid`` uses cell centres ((i + 1/2) / k); for the square ``n`` must be
    a perfect square.  ``random`` draws uniformly.
    """
    if n <= 0:
        raise ValueError("need at least one interior point")
    if strategy == "grid":
        if dom.dim == 1:
            return ((np.arange(n) + 0.5) / n)[:, None]
        k = math.isqrt(n)
        if k * k != n:
            raise ValueError(f"grid sampling of the unit square needs a square count, got {n}")
        c = (np.arange(k) + 0.5) / k
        g1, g2 = np.meshgrid(c, c, indexing="ij")
        return np.column_stack([g1.ravel(), g2.ravel()])
    if strategy == "random":
        rng = np.random.default_rng(seed)
        pts = rng.uniform(0.0, 1.0, size=(n, dom.dim))
        bad = pts <= 0.0
        while bad.any():
            pts[bad] = rng.uniform(0.0, 1.0, size=int(bad.sum()))
            bad = pts <= 0.0
        return pts
    raise ValueError(f"unknown sampling strategy {strategy!r}")


def sample_boundary(dom, m, strategy="grid", seed=0):
    """``m`` points exactly on the reference boundary, shape (m, dim).

    On the square the ``grid`` strategy places ``m / 4`` cell-centred points
    on each edge (corners excluded).
    """
    if m <= 0:
        raise ValueError("need at least one boundary point")
    rng = np.random.default_rng(seed)
    if dom.dim == 1:
        if strategy == "grid":
            return (np.arange(m) % 2).astype(float)[:, None]
        if strategy == "random":
            return rng.integers(0, 2, size=m).astype(float)[:, None]
        raise ValueError(f"unknown sampling strategy {strategy!r}")
    if strategy == "grid":
        if m % 4:
            raise ValueError(f"grid sampling of the square boundary needs a multiple of 4, got {m}")
        k = m // 4
        t = (np.arange(k) + 0.5) / k
        edge = np.repeat(np.arange(4), k)
        t = np.tile(t, 4)
    elif strategy == "random":
        edge = rng.integers(0, 4, size=m)
        t = rng.uniform(0.0, 1.0, size=m)
    else:
        raise ValueError(f"unknown sampling strategy {strategy!r}")
    pts = np.empty((m, 2))
    # edges: bottom, right, top, left
    pts[:, 0] = np.select([edge == 0, edge == 1, edge == 2], [t, 1.0, t], 0.0)
    pts[:, 1] = np.select([edge == 0, edge == 1, edge == 2], [0.0, t, 1.0], t)
    return pts


@dataclass
class CollocationSet:
    interior: np.ndarray
    boundary: np.ndarray
    seed: int = 0
    strategy: str = "grid"


def collocation(dom, n_interior, n_boundary, strategy="grid", seed=0):
    # independent streams for interior and boundary
    si, sb = np.random.SeedSequence(seed).spawn(2)
    interior = sample_interior(dom, n_interior, strategy, int(si.generate_state(1)[0]))
    boundary = sample_boundary(dom, n_boundary, strategy, int(sb.generate_state(1)[0])) if n_boundary else np.empty((0, dom.dim))
    return CollocationSet(interior, boundary, seed, strategy)


def evaluation_grid(dom, n1d=None):
    """Uniform grid including the boundary: 200 points (1-D) or 64 x 64 (2-D)."""
    if dom.dim == 1:
        return np.linspace(0.0, 1.0, n1d or 200)[:, None]
    k = n1d or 64
    c = np.linspace(0.0, 1.0, k)
    g1, g2 = np.meshgrid(c, c, indexing="ij")
    return np.column_stack([g1.ravel(), g2.ravel()])


# -- maps -------------------------------------------------------------------

class Diffeo:
    """Smooth map y = phi(x) from the m-dim reference domain into R^n.

    Subclasses implement :meth:`map` with engine-agnostic arithmetic so that
    Jacobians (and their derivatives) come from automatic differentiation.
    """

    m = 1
    n = 1
    check_det = True

    def map(self, xs):
        raise NotImplementedError

    def __call__(self, xs):
        return self.map(xs)

    def params(self):
        return {}

    def evaluate(self, points):
        """Numeric images of an (N, m) array of points, shape (N, n)."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        ys = self.map([points[:, j] for j in range(self.m)])
        return np.column_stack([np.broadcast_to(np.asarray(ad.value_of(y), dtype=float), (len(points),)) for y in ys])


class Identity(Diffeo):
    def __init__(self, m=2):
        self.m = self.n = m

    def map(self, xs):
        return list(xs)


class Scaling(Diffeo):
    """y = factor * x."""

    def __init__(self, factor=2.0, m=2):
        self.m = self.n = m
        self.factor = float(factor)

    def map(self, xs):
        return [self.factor * x for x in xs]

    def params(self):
        return {"factor": self.factor}


class Spiral(Diffeo):
    """Archimedean spiral: (r(lx) sin(lx), r(lx) cos(lx)) with r(t) = a t."""

    m, n = 1, 2

    def __init__(self, l=3.5 * math.pi, a=0.1):
        if l <= 0 or a <= 0:
            raise ValueError("spiral needs l > 0 and a > 0")
        self.l = float(l)
        self.a = float(a)

    def map(self, xs):
        (x,) = xs
        t = self.l * x
        r = self.a * t
        return [r * ad.sin(t), r * ad.cos(t)]

    def speed(self, x):
        """|phi'(x)| in closed form."""
        t = self.l * np.asarray(x, dtype=float)
        return self.a * self.l * np.sqrt(1.0 + t * t)

    def params(self):
        return {"l": self.l, "a": self.a}


class SpherePatch(Diffeo):
    """Unit-sphere patch in polar coordinates, psi = x1 + psi0, theta = x2 + theta0."""

    m, n = 2, 3

    def __init__(self, psi0=0.5, theta0=1.0):
        if not (0.0 < psi0 and psi0 + 1.0 < math.pi):
            raise ValueError("sphere patch must avoid the poles: need 0 < psi0 and psi0 + 1 < pi")
        self.psi0 = float(psi0)
        self.theta0 = float(theta0)

    def map(self, xs):
        x1, x2 = xs
        psi = x1 + self.psi0
        theta = x2 + self.theta0
        sp = ad.sin(psi)
        return [sp * ad.cos(theta), sp * ad.sin(theta), ad.cos(psi)]

    def params(self):
        return {"psi0": self.psi0, "theta0": self.theta0}


class Tube(Diffeo):
    """(x1, (2 x2 - 1) s(x1)) with half-width s(x1) = base + amp cos(freq x1)."""

    m, n = 2, 2

    def __init__(self, amp=0.1, freq=3.0 * math.pi, base=0.2):
        self.amp = float(amp)
        self.freq = float(freq)
        self.base = float(base)
        if self.base - abs(self.amp) <= 0.0:
            raise ValueError("tube half-width s(x1) must stay positive on [0, 1]")

    def halfwidth(self, x1):
        return self.base + self.amp * ad.cos(self.freq * x1)

    def map(self, xs):
        x1, x2 = xs
        return [x1, (2.0 * x2 - 1.0) * self.halfwidth(x1)]

    def params(self):
        return {"amp": self.amp, "freq": self.freq, "base": self.base}


class NeuralDiffeo(Diffeo):
    """y = net(x).  Smooth, but not guaranteed to be invertible."""

    check_det = False

    def __init__(self, net, layers=None):
        self.net = net
        self.layers = layers
        self.m = net.n_inputs
        self.n = net.n_outputs

    def bound(self, layers):
        return NeuralDiffeo(self.net, layers)

    def map(self, xs):
        return self.net.forward(xs, self.layers)

    def params(self):
        return {"widths": list(self.net.widths)}


def spiral(l=3.5 * math.pi, a=0.1):
    return Spiral(l, a)


def sphere_patch(psi0=0.5, theta0=1.0):
    return SpherePatch(psi0, theta0)


def tube(amp=0.1, freq=3.0 * math.pi, base=0.2):
    return Tube(amp, freq, base)


def identity(m=2):
    return Identity(m)


def neural(net):
    return NeuralDiffeo(net)


# -- Jacobians --------------------------------------------------------------

def jacobian(d, xs, ys=None):
    """n x m nested list of differentiable entries dphi_i/dx_j.

    ``xs`` must be leaves of one engine; pass ``ys = d.map(xs)`` if it was
    already computed.
    """
    if ys is None:
        ys = d.map(xs)
    return [ad.derivatives(y, xs) for y in ys]


def jacobian_values(d, points):
    """Numeric Jacobians at an (N, m) array of points, shape (N, n, m)."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    xs = [T.variable(points[:, j]) for j in range(d.m)]
    J = jacobian(d, xs)
    out = np.empty((len(points), d.n, d.m))
    for i in range(d.n):
        for j in range(d.m):
            out[:, i, j] = np.broadcast_to(ad.value_of(J[i][j]), (len(points),))
    return out


def check_diffeomorphism(d, points, strict=True):
    """det J at each point for square maps; raises if any is <= 0 and ``strict``."""
    if d.m != d.n:
        return None
    J = jacobian_values(d, points)
    det = np.linalg.det(J)
    if strict and np.any(det <= 0.0):
        bad = int(np.argmin(det))
        raise DiffeomorphismError(
            f"det J = {det[bad]:.3e} <= 0 at reference point {points[bad].tolist()}")
    return det


# -- distance functions -----------------------------------------------------

def q(z):
    return 4.0 * z * (1.0 - z)


@dataclass(frozen=True)
class DistanceFn:
    """b_ref: zero on (part of) the reference boundary, positive inside.

    ``interval``: q(x) (both ends), ``interval-left``: x (only x = 0),
    ``square``: q(x1) q(x2), ``square-right``: 1 - x1 (only x1 = 1).
    """

    kind: str

    def __call__(self, xs):
        if self.kind == "interval":
            return q(xs[0])
        if self.kind == "interval-left":
            return xs[0]
        if self.kind == "square":
            return q(xs[0]) * q(xs[1])
        if self.kind == "square-right":
            return 1.0 - xs[0]
        raise ValueError(f"unknown distance function {self.kind!r}")


def distance(dom):
    return DistanceFn(dom.kind)
