"""Shared pieces of the experiment runs: reports, error metric, seeding."""
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .. import network
from ..optimize import LbfgsConfig

log = logging.getLogger(__name__)


@dataclass
class ExperimentReport:
    experiment: str
    config: object
    history: list
    params: list
    local: np.ndarray
    global_: np.ndarray
    values: dict
    l2_error: Optional[float]
    wall_time: float
    seed: int
    status: str = "ok"
    n_iter: int = 0
    n_eval: int = 0
    metrics: dict = field(default_factory=dict)
    snapshots: list = field(default_factory=list)

    @property
    def final_loss(self):
        return self.history[-1].total if self.history else float("nan")


def l2_error(pred, oracle):
    """Root-mean-square difference over the evaluation grid."""
    pred = np.asarray(pred, dtype=float).ravel()
    oracle = np.asarray(oracle, dtype=float).ravel()
    if pred.shape != oracle.shape:
        raise ValueError(f"sample count mismatch: {pred.shape} vs {oracle.shape}")
    d = pred - oracle
    return float(np.sqrt(np.mean(d * d)))


def sub_seeds(seed, k):
    """k independent integer seeds derived from one master seed."""
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(k)]


def lbfgs_config(cfg):
    o = cfg.optimizer
    return LbfgsConfig(memory=o.memory, max_iter=cfg.steps, c1=o.c1, c2=o.c2,
                       max_ls=o.max_ls, grad_tol=o.grad_tol, step_tol=o.step_tol)


def make_net(widths, activation, seed):
    return network.init(widths, activation, seed)


def relative_change_stop(tol, window):
    """Callback stopping when |f_k - f_{k-1}| / |f_{k-1}| < tol for ``window`` steps in a row."""
    if not tol or tol <= 0:
        return None
    state = {"prev": None, "count": 0}

    def cb(step, report):
        prev = state["prev"]
        state["prev"] = report.total
        if prev is None:
            return False
        rel = abs(prev - report.total) / max(abs(prev), 1e-300)
        state["count"] = state["count"] + 1 if rel < tol else 0
        return state["count"] >= window

    return cb
