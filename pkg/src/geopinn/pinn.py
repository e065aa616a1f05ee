"""Loss assembly and training.

A :class:`PdeProblem` describes residuals and boundary deviations as
engine-agnostic functions of bound networks and local coordinates.  The
loss is

    total = mean_i sum_k r_k(x_i)^2  +  w * mean_j sum_k e_k(z_j)^2  +  penalty

where the boundary term enters only for weak boundary conditions (with
exact conditions it is still computed for monitoring).  Two evaluators
exist: :class:`BatchedLoss` (all points in one array graph; used for
training) and :func:`scalar_loss` (point by point on the scalar engine with
checkpoint/rollback; used as an independent reference).
"""
import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import autodiff as ad
from .autodiff import tensor as T
from .geometry import NeuralDiffeo
from .optimize import LbfgsConfig, minimize

log = logging.getLogger(__name__)

EXACT = "exact"
WEAK = "weak"


class NonFiniteLossError(ArithmeticError):
    pass


class TrainingAborted(RuntimeError):
    """Training stopped early; ``result`` holds the last good state."""

    def __init__(self, message, result):
        super().__init__(message)
        self.result = result


class BoundNet:
    """A network tied to one set of parameter leaves (or plain arrays)."""

    def __init__(self, net, layers=None):
        self.net = net
        self.layers = layers

    def __call__(self, xs):
        return self.net.forward(xs, self.layers)

    def as_diffeo(self):
        return NeuralDiffeo(self.net, self.layers)


@dataclass
class PdeProblem:
    """Residual rules plus boundary handling for one PDE.

    ``residuals(nets, xs)`` returns the list of per-point residuals at
    interior points, ``boundary(nets, zs)`` the per-point deviations from
    the Dirichlet data, ``penalty(nets)`` an extra scalar term (already
    weighted).  ``nets`` is a list of :class:`BoundNet`.
    """

    name: str
    mode: str
    residuals: Callable
    boundary: Optional[Callable] = None
    bc: str = EXACT
    weight: float = 1.0
    penalty: Optional[Callable] = None

    def __post_init__(self):
        if self.bc not in (EXACT, WEAK):
            raise ValueError(f"unknown bc style {self.bc!r}")
        if self.bc == WEAK and (self.boundary is None or not self.weight > 0):
            raise ValueError("weak boundary conditions need a boundary rule and weight > 0")


@dataclass
class LossReport:
    total: float
    interior: float
    boundary: float
    penalty: float = 0.0
    weight: float = 1.0
    per_residual: list = field(default_factory=list)
    step: int = 0
    extras: dict = field(default_factory=dict)


# -- parameter packing ---------------------------------------------------------

def pack(nets):
    return np.concatenate([n.get_params() for n in nets])


def unpack(nets, theta):
    pos = 0
    for n in nets:
        n.set_params(theta[pos:pos + n.n_params])
        pos += n.n_params


def _split(nets, theta):
    out, pos = [], 0
    for n in nets:
        out.append(theta[pos:pos + n.n_params])
        pos += n.n_params
    return out


# -- batched evaluation --------------------------------------------------------

def _columns(points, make):
    points = np.asarray(points, dtype=float)
    return [make(np.ascontiguousarray(points[:, j])) for j in range(points.shape[1])]


def _mean_square(r, n):
    if isinstance(r, T.Tensor):
        if r.value.ndim == 0:
            return T.mul(T.mul(r, r), 1.0)
        return T.mean(T.mul(r, r))
    v = np.broadcast_to(np.asarray(r, dtype=float), (n,))
    return T.constant(np.mean(v * v))


def interior_loss(problem, bound, points):
    """Mean squared residual, summed over residual components (batched engine)."""
    xs = _columns(points, T.variable)
    res = problem.residuals(bound, xs)
    terms = [_mean_square(r, len(points)) for r in res]
    total = terms[0]
    for t in terms[1:]:
        total = T.add(total, t)
    return total, terms


def boundary_loss(problem, bound, points):
    """Mean squared boundary deviation (batched engine)."""
    if problem.boundary is None or len(points) == 0:
        return T.constant(0.0)
    zs = _columns(points, T.constant)
    dev = problem.boundary(bound, zs)
    total = None
    for r in dev:
        t = _mean_square(r, len(points))
        total = t if total is None else T.add(total, t)
    return total


class BatchedLoss:
    """Loss value and parameter gradient on the batched array engine."""

    def __init__(self, problem, nets, interior, boundary=None):
        self.problem = problem
        self.nets = nets
        self.interior = np.asarray(interior, dtype=float)
        self.boundary = np.empty((0, self.interior.shape[1])) if boundary is None else np.asarray(boundary, dtype=float)
        self.n_params = sum(n.n_params for n in nets)
        self.n_eval = 0

    def bind(self, theta):
        bound, leaves = [], []
        for net, th in zip(self.nets, _split(self.nets, theta)):
            layers, lv = net.bind_tensor(th)
            bound.append(BoundNet(net, layers))
            leaves += lv
        return bound, leaves

    def evaluate(self, theta, with_grad=True):
        """Returns ``(LossReport, gradient or None)``."""
        theta = np.asarray(theta, dtype=float)
        self.n_eval += 1
        bound, leaves = self.bind(theta)
        p = self.problem
        interior, terms = interior_loss(p, bound, self.interior)
        total = interior
        weak = p.bc == WEAK
        bnd = boundary_loss(p, bound, self.boundary) if weak else None
        if weak:
            total = T.add(total, T.mul(bnd, p.weight))
        pen = p.penalty(bound) if p.penalty is not None else None
        if pen is not None:
            total = T.add(total, pen)
        tv = float(total.value)
        if not np.isfinite(tv):
            raise NonFiniteLossError(f"{p.name}: loss is {tv!r}")
        grad = None
        if with_grad:
            gs = T.grad(total, leaves, create_graph=False)
            grad = np.concatenate([g.value.ravel() for g in gs])
            if not np.all(np.isfinite(grad)):
                raise NonFiniteLossError(f"{p.name}: non-finite loss gradient")
        if not weak and p.boundary is not None and len(self.boundary):
            with T.no_graph():
                bv = float(boundary_loss(p, bound, self.boundary).value)
        else:
            bv = float(bnd.value) if bnd is not None else 0.0
        report = LossReport(
            total=tv,
            interior=float(interior.value),
            boundary=bv,
            penalty=float(pen.value) if pen is not None else 0.0,
            weight=p.weight if weak else 0.0,
            per_residual=[float(t.value) for t in terms],
        )
        return report, grad

    def __call__(self, theta):
        report, grad = self.evaluate(theta)
        return report.total, grad


# -- scalar reference evaluation ------------------------------------------------

def scalar_loss(problem, nets, interior, boundary=None, theta=None, rollback=True, with_grad=True):
    """Same loss on the scalar engine, one point at a time.

    With ``rollback`` each point's graph is discarded after its value and
    parameter gradient are accumulated; without, a single monolithic graph
    is built and differentiated once.  Returns ``(total, gradient)``.
    """
    theta = pack(nets) if theta is None else np.asarray(theta, dtype=float)
    ctx = ad.DiffContext()
    bound = []
    first = len(ctx)
    work = [n.copy() for n in nets]
    unpack(work, theta)
    for net in work:
        bound.append(BoundNet(net, net.bind_scalar(ctx, differentiable=True)))
    count = sum(n.n_params for n in nets)
    interior = np.asarray(interior, dtype=float)
    n_int = len(interior)
    value = 0.0
    grad = np.zeros(count)
    pieces = []

    def account(expr):
        nonlocal value, grad
        if rollback:
            value += float(ad.value_of(expr))
            if with_grad and ad.is_traced(expr):
                grad += ad.gradient_array(expr, first, count)
        else:
            pieces.append(expr)

    for pt in interior:
        cp = ctx.checkpoint()
        xs = ctx.variables(pt)
        res = problem.residuals(bound, xs)
        contrib = _sum_squares(res) / n_int
        account(contrib)
        if rollback:
            ctx.rollback(cp)
    if problem.bc == WEAK and boundary is not None and len(boundary):
        boundary = np.asarray(boundary, dtype=float)
        for pt in boundary:
            cp = ctx.checkpoint()
            zs = [ctx.lift(v) for v in pt]
            dev = problem.boundary(bound, zs)
            account(_sum_squares(dev) * (problem.weight / len(boundary)))
            if rollback:
                ctx.rollback(cp)
    if problem.penalty is not None:
        cp = ctx.checkpoint()
        account(problem.penalty(bound))
        if rollback:
            ctx.rollback(cp)
    if not rollback:
        total = pieces[0]
        for p_ in pieces[1:]:
            total = total + p_
        value = float(ad.value_of(total))
        if with_grad:
            grad = ad.gradient_array(total, first, count)
    return value, grad


def _sum_squares(rs):
    acc = None
    for r in rs:
        t = r * r
        acc = t if acc is None else acc + t
    return acc


# -- training --------------------------------------------------------------------

@dataclass
class TrainResult:
    nets: list
    history: list
    status: str
    n_iter: int
    n_eval: int
    wall_time: float
    snapshots: list = field(default_factory=list)


def train(problem, nets, colloc, cfg=None, steps=None, monitors=None, callback=None,
          snapshot=None, snapshot_every=0):
    """Fit ``nets`` (modified in place) with L-BFGS on the batched loss.

    ``steps`` overrides ``cfg.max_iter``.  ``monitors`` maps names to
    ``fn(nets) -> float`` evaluated after every accepted step and stored in
    each report's ``extras``.  ``callback(step, report)`` may return True to
    stop.  ``snapshot(nets)`` is recorded at step 0, every
    ``snapshot_every`` steps and at the end.
    """
    cfg = cfg or LbfgsConfig()
    if steps is not None:
        cfg = LbfgsConfig(**{**cfg.__dict__, "max_iter": int(steps)})
    monitors = monitors or {}
    loss = BatchedLoss(problem, nets, colloc.interior, colloc.boundary)
    cache = {}
    theta0 = pack(nets)
    t_start = time.perf_counter()

    def objective(theta):
        report, grad = loss.evaluate(theta)
        cache[theta.tobytes()] = report
        return report.total, grad

    def record(step, theta, report):
        report.step = step
        if monitors or snapshot is not None:
            unpack(nets, theta)
            for name, fn in monitors.items():
                report.extras[name] = float(fn(nets))
        history.append(report)

    history, snapshots = [], []
    last_good = [theta0]

    def on_step(k, theta, f):
        report = cache.get(theta.tobytes())
        cache.clear()
        if report is None:  # not expected; recompute
            report, _ = loss.evaluate(theta, with_grad=False)
        last_good[0] = theta.copy()
        record(k, theta, report)
        if snapshot is not None and snapshot_every and k % snapshot_every == 0:
            snapshots.append((k, snapshot(nets)))
        if callback is not None:
            return callback(k, report)
        return False

    def finish(status, n_iter):
        unpack(nets, last_good[0])
        if snapshot is not None and (not snapshots or snapshots[-1][0] != n_iter):
            snapshots.append((n_iter, snapshot(nets)))
        return TrainResult(nets, history, status, n_iter, loss.n_eval,
                           time.perf_counter() - t_start, snapshots)

    try:
        f0, g0 = objective(theta0)
        report0 = cache.pop(theta0.tobytes())
        record(0, theta0, report0)
        if snapshot is not None:
            snapshots.append((0, snapshot(nets)))
        if cfg.max_iter <= 0:
            return finish("max-iter", 0)
        first = [(f0, g0)]

        def objective_reuse(theta):
            if first and np.array_equal(theta, theta0):
                return first.pop()
            return objective(theta)

        res = minimize(objective_reuse, theta0, cfg, on_step)
    except (NonFiniteLossError, ArithmeticError) as exc:
        result = finish(f"aborted: {exc}", len(history) - 1)
        raise TrainingAborted(f"{problem.name}: training aborted after {len(history) - 1} steps: {exc}",
                              result) from exc
    log.info("%s: %d iterations, %d evaluations, status %s", problem.name, res.n_iter, loss.n_eval, res.status)
    return finish(res.status, res.n_iter)
