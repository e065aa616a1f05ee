"""Eikonal equation on an Archimedean spiral (1-D manifold in R^2).

The solution is the arc length measured from the spiral's centre; the
network sees global coordinates and ``u(0) = 0`` is imposed exactly through
the factor ``b_ref(x) = x``.
"""
import math
import time

import numpy as np

from .. import geometry as geo
from ..pinn import EXACT, PdeProblem, train
from ..pullback import MANIFOLD, ComposedField, OutputTransform, arclength_derivative_of, curve_speed
from .common import ExperimentReport, l2_error, lbfgs_config, make_net, sub_seeds


def _simpson(f, a, b, fa, fm, fb, whole, tol, depth):
    m = 0.5 * (a + b)
    lm, rm = 0.5 * (a + m), 0.5 * (m + b)
    flm, frm = f(lm), f(rm)
    left = (m - a) / 6.0 * (fa + 4.0 * flm + fm)
    right = (b - m) / 6.0 * (fm + 4.0 * frm + fb)
    if depth <= 0 or abs(left + right - whole) <= 15.0 * tol:
        return left + right + (left + right - whole) / 15.0
    return (_simpson(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + _simpson(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1))


def adaptive_simpson(f, a, b, tol=1e-10, max_depth=50):
    if a == b:
        return 0.0
    fa, fb, fm = f(a), f(b), f(0.5 * (a + b))
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    return _simpson(f, a, b, fa, fm, fb, whole, tol, max_depth)


def arc_length_oracle(x, l=3.5 * math.pi, a=0.1, tol=1e-10):
    """Length of the spiral from phi(0) to phi(x) by adaptive Simpson quadrature."""
    def speed(t):
        s = l * t
        return a * l * math.sqrt(1.0 + s * s)

    xs = np.atleast_1d(np.asarray(x, dtype=float))
    order = np.argsort(xs)
    out = np.empty_like(xs)
    acc, prev = 0.0, 0.0
    for i in order:
        xi = float(xs[i])
        if not 0.0 <= xi <= 1.0:
            raise ValueError(f"arc length oracle defined on [0, 1], got {xi}")
        acc += adaptive_simpson(speed, prev, xi, tol / max(len(xs), 1))
        prev = xi
        out[i] = acc
    return out if np.ndim(x) else float(out[0])


def arc_length_closed_form(x, l=3.5 * math.pi, a=0.1):
    """a/2 (t sqrt(1 + t^2) + asinh t), t = l x."""
    t = l * np.asarray(x, dtype=float)
    return 0.5 * a * (t * np.sqrt(1.0 + t * t) + np.arcsinh(t))


def build(cfg):
    g = cfg.geometry
    diffeo = geo.spiral(g["l"], g["a"])
    transform = OutputTransform([geo.DistanceFn("interval-left")], [None])

    def residuals(nets, xs):
        field = ComposedField(nets[0], diffeo, MANIFOLD, transform)
        ys = diffeo.map(xs)
        u = field(xs, ys)
        return [arclength_derivative_of(u, xs, curve_speed(diffeo, xs, ys)) - 1.0]

    def boundary(nets, zs):
        field = ComposedField(nets[0], diffeo, MANIFOLD, transform)
        return [field(zs)]

    problem = PdeProblem("eikonal", MANIFOLD, residuals, boundary, EXACT)
    return problem, diffeo, transform


def run(cfg):
    t0 = time.perf_counter()
    problem, diffeo, transform = build(cfg)
    net_seed, sample_seed = sub_seeds(cfg.seed, 2)
    net = make_net(cfg.network.widths, cfg.network.activation, net_seed)
    dom = geo.unit_interval()
    c = cfg.collocation
    colloc = geo.collocation(dom, c.n_interior, 0, c.strategy, sample_seed)
    colloc.boundary = np.array([[0.0]])  # the only Dirichlet point

    def bc_dev(nets):
        field = ComposedField(nets[0], diffeo, MANIFOLD, transform)
        return float(np.max(np.abs(field([np.array([0.0])]))))

    result = train(problem, [net], colloc, lbfgs_config(cfg), monitors={"bc_max_dev": bc_dev})

    grid = geo.evaluation_grid(dom)
    field = ComposedField(net, diffeo, MANIFOLD, transform)
    pred = np.asarray(field([grid[:, 0]]), dtype=float)
    oracle = arc_length_oracle(grid[:, 0], diffeo.l, diffeo.a)
    metrics = {
        "max_value": float(pred.max()),
        "spiral_length": float(arc_length_oracle(1.0, diffeo.l, diffeo.a)),
    }
    return ExperimentReport(
        experiment="eikonal", config=cfg, history=result.history, params=[net.get_params()],
        local=grid, global_=diffeo.evaluate(grid), values={"u": pred, "u_exact": oracle},
        l2_error=l2_error(pred, oracle), wall_time=time.perf_counter() - t0, seed=cfg.seed,
        status=result.status, n_iter=result.n_iter, n_eval=result.n_eval, metrics=metrics,
    )
