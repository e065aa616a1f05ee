"""Stokes flow through a deformed tube (transformation mode, m = n = 2).

Unknowns (u, v, p) are functions of local coordinates; the momentum and
continuity residuals are taken in global coordinates through the
inverse-Jacobian pullback.  Boundary data are imposed exactly on the unit
square: u = 4 x2 (1 - x2) and v = 0 on the whole boundary (factor
q(x1) q(x2)), p = 0 on the outlet x1 = 1 (factor 1 - x1).
"""
import time

import numpy as np

from .. import autodiff as ad
from .. import geometry as geo
from ..pinn import EXACT, PdeProblem, train
from ..pullback import TRANSFORMATION, ComposedField, OutputTransform, TransformFrame
from .common import ExperimentReport, lbfgs_config, make_net, sub_seeds

CHECK_BOUNDARY_POINTS = 400
FLUX_SECTIONS = (0.0, 0.5, 1.0)


def inlet_profile(xs):
    return 4.0 * xs[1] * (1.0 - xs[1])


def make_transform():
    square = geo.DistanceFn("square")
    return OutputTransform([square, square, geo.DistanceFn("square-right")],
                           [inlet_profile, None, None])


class _Stacked:
    """Three scalar networks presented as one 3-output network."""

    def __init__(self, nets):
        self.nets = nets

    def __call__(self, xs):
        return [n(xs)[0] for n in self.nets]


def _network(nets):
    return nets[0] if len(nets) == 1 else _Stacked(nets)


def build(cfg):
    g = cfg.geometry
    diffeo = geo.tube(g["amp"], g["freq"], g["base"])
    transform = make_transform()

    def fields(nets):
        return ComposedField(_network(nets), diffeo, TRANSFORMATION, transform)

    def residuals(nets, xs):
        u, v, p = fields(nets).outputs(xs)
        frame = TransformFrame(diffeo, xs)
        gu, gv, gp = frame.gradient(u), frame.gradient(v), frame.gradient(p)
        return [
            -frame.laplacian(u, gu) + gp[0],
            -frame.laplacian(v, gv) + gp[1],
            gu[0] + gv[1],
        ]

    def boundary(nets, zs):
        u, v, p = fields(nets).outputs(zs)
        outlet = (np.asarray(ad.value_of(zs[0]), dtype=float) == 1.0).astype(float)
        return [u - inlet_profile(zs), v, p * outlet]

    problem = PdeProblem("stokes-tube", TRANSFORMATION, residuals, boundary, EXACT)
    return problem, diffeo, fields


def boundary_deviation(fields, nets, points):
    """Max |output - Dirichlet data| over boundary samples, per condition."""
    xs = [points[:, 0], points[:, 1]]
    u, v, p = [np.asarray(o, dtype=float) for o in fields(nets).outputs(xs)]
    outlet = points[:, 0] == 1.0
    return {
        "u": float(np.max(np.abs(u - inlet_profile(xs)))),
        "v": float(np.max(np.abs(v))),
        "p": float(np.max(np.abs(p[outlet]))) if outlet.any() else 0.0,
    }


def section_flux(fields, nets, diffeo, x1, n=401):
    """Volume flux through the vertical section y1 = x1: int u dy2 (trapezoid)."""
    x2 = np.linspace(0.0, 1.0, n)
    x1s = np.full(n, float(x1))
    u = np.asarray(fields(nets).outputs([x1s, x2])[0], dtype=float)
    # y2 = (2 x2 - 1) s(x1)  =>  dy2 = 2 s(x1) dx2
    return float(np.trapezoid(u * 2.0 * diffeo.halfwidth(float(x1)), x2))


def run(cfg):
    t0 = time.perf_counter()
    problem, diffeo, fields = build(cfg)
    w = list(cfg.network.widths)
    if cfg.network.layout == "vector":
        if w[-1] != 3:
            raise ValueError("stokes-tube with layout=vector needs 3 network outputs")
        seeds = sub_seeds(cfg.seed, 2)
        nets = [make_net(w, cfg.network.activation, seeds[0])]
    else:
        seeds = sub_seeds(cfg.seed, 4)
        nets = [make_net(w[:-1] + [1], cfg.network.activation, s) for s in seeds[:3]]
    sample_seed = seeds[-1]
    dom = geo.unit_square()
    c = cfg.collocation
    colloc = geo.collocation(dom, c.n_interior, c.n_boundary, c.strategy, sample_seed)
    geo.check_diffeomorphism(diffeo, colloc.interior)
    check_pts = geo.sample_boundary(dom, CHECK_BOUNDARY_POINTS, "grid")

    def bc_dev(ns):
        return max(boundary_deviation(fields, ns, check_pts).values())

    result = train(problem, nets, colloc, lbfgs_config(cfg), monitors={"bc_max_dev": bc_dev})

    grid = geo.evaluation_grid(dom)
    xs = [grid[:, 0], grid[:, 1]]
    u, v, p = [np.asarray(o, dtype=float) for o in fields(nets).outputs(xs)]
    speed = np.hypot(u, v)
    imax = int(np.argmax(speed))
    fluxes = {f"{x1:g}": section_flux(fields, nets, diffeo, x1) for x1 in FLUX_SECTIONS}
    metrics = {
        "boundary_deviation": boundary_deviation(fields, nets, check_pts),
        "max_bc_dev_all_steps": max(h.extras["bc_max_dev"] for h in result.history),
        "initial_interior_loss": result.history[0].interior,
        "final_interior_loss": result.history[-1].interior,
        "residual_reduction": result.history[0].interior / max(result.history[-1].interior, 1e-300),
        "max_speed": float(speed[imax]),
        "max_speed_x1": float(grid[imax, 0]),
        "max_speed_x2": float(grid[imax, 1]),
        "fluxes": fluxes,
        "flux_spread": (max(fluxes.values()) - min(fluxes.values())) / max(abs(np.mean(list(fluxes.values()))), 1e-300),
    }
    return ExperimentReport(
        experiment="stokes-tube", config=cfg, history=result.history,
        params=[n.get_params() for n in nets], local=grid, global_=diffeo.evaluate(grid),
        values={"u": u, "v": v, "p": p}, l2_error=None, wall_time=time.perf_counter() - t0,
        seed=cfg.seed, status=result.status, n_iter=result.n_iter, n_eval=result.n_eval, metrics=metrics,
    )
