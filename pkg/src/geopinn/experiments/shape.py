"""Joint training of a solution network and a network-parametrized domain.

Solves -Lap u = 1 on phi(unit square) with u = 0 imposed weakly on
phi(boundary), training u and phi together.  Four corner points are held
near their reference positions by a quadratic penalty.
"""
import logging
import time

import numpy as np

from .. import autodiff as ad
from .. import geometry as geo
from ..autodiff import tensor as T
from ..pinn import WEAK, PdeProblem, TrainingAborted, train
from ..pullback import TRANSFORMATION, ComposedField, TransformFrame
from .common import ExperimentReport, lbfgs_config, make_net, relative_change_stop, sub_seeds

log = logging.getLogger(__name__)

CORNERS = ((0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0))
OUTLINE_POINTS = 400


def corner_penalty(phi, weight):
    """weight * sum over corners of |phi(c) - c|^2."""
    acc = None
    for c in CORNERS:
        y = phi([c[0], c[1]])
        t = (y[0] - c[0]) * (y[0] - c[0]) + (y[1] - c[1]) * (y[1] - c[1])
        acc = t if acc is None else acc + t
    if isinstance(acc, T.Tensor):
        acc = T.total(acc)
    return acc * weight


def corner_errors(phi_net):
    pts = np.array(CORNERS)
    y = np.stack(phi_net([pts[:, 0], pts[:, 1]]), axis=-1)
    return np.linalg.norm(y - pts, axis=1)


def roundness(outline):
    """max / min distance of outline points from their centroid (1 for a circle)."""
    d = np.linalg.norm(outline - outline.mean(axis=0), axis=1)
    return float(d.max() / max(d.min(), 1e-300))


def build(cfg):
    def residuals(nets, xs):
        u_net, phi = nets
        diffeo = phi.as_diffeo()
        u = ComposedField(u_net, diffeo, TRANSFORMATION)(xs)
        frame = TransformFrame(diffeo, xs)
        return [-frame.laplacian(u) - 1.0]

    def boundary(nets, zs):
        return [ComposedField(nets[0], nets[1].as_diffeo(), TRANSFORMATION)(zs)]

    def penalty(nets):
        return corner_penalty(nets[1], cfg.bc.corner_weight)

    return PdeProblem("shape-opt", TRANSFORMATION, residuals, boundary, WEAK,
                      weight=cfg.bc.weight, penalty=penalty)


def run(cfg):
    t0 = time.perf_counter()
    problem = build(cfg)
    u_seed, phi_seed, sample_seed = sub_seeds(cfg.seed, 3)
    u_net = make_net(cfg.network.widths, cfg.network.activation, u_seed)
    phi_net = make_net(cfg.network.phi_widths, cfg.network.activation, phi_seed)
    dom = geo.unit_square()
    c = cfg.collocation
    colloc = geo.collocation(dom, c.n_interior, c.n_boundary, c.strategy, sample_seed)
    outline_ref = geo.sample_boundary(dom, OUTLINE_POINTS, "grid")

    def outline(nets):
        return np.stack(nets[1]([outline_ref[:, 0], outline_ref[:, 1]]), axis=-1)

    def min_det(nets):
        det = geo.check_diffeomorphism(geo.neural(nets[1]), colloc.interior, strict=False)
        worst = float(det.min())
        if worst <= 0.0:
            log.warning("shape-opt: phi is not orientation preserving (min det J = %.3e)", worst)
        return worst

    monitors = {"min_det_j": min_det, "roundness": lambda ns: roundness(outline(ns))}
    stop = relative_change_stop(cfg.optimizer.stop_rel_change, cfg.optimizer.stop_window)
    nets = [u_net, phi_net]
    result = train(problem, nets, colloc, lbfgs_config(cfg), monitors=monitors, callback=stop,
                   snapshot=outline, snapshot_every=cfg.snapshot_every)

    grid = geo.evaluation_grid(dom)
    xs = [grid[:, 0], grid[:, 1]]
    diffeo = geo.neural(phi_net)
    u = np.asarray(ComposedField(u_net, diffeo, TRANSFORMATION)(xs), dtype=float)
    hist = result.history
    status = result.status
    if status == "callback":
        status = "converged"
    metrics = {
        "corner_errors": corner_errors(phi_net).tolist(),
        "roundness_initial": hist[0].extras["roundness"],
        "roundness_final": hist[-1].extras["roundness"],
        "min_det_j": min(h.extras["min_det_j"] for h in hist),
    }
    return ExperimentReport(
        experiment="shape-opt", config=cfg, history=hist, params=[n.get_params() for n in nets],
        local=grid, global_=diffeo.evaluate(grid), values={"u": u}, l2_error=None,
        wall_time=time.perf_counter() - t0, seed=cfg.seed, status=status,
        n_iter=result.n_iter, n_eval=result.n_eval, metrics=metrics,
        snapshots=[(k, s.tolist()) for k, s in result.snapshots],
    )


__all__ = ["run", "build", "corner_penalty", "corner_errors", "roundness", "TrainingAborted"]
