"""L-BFGS with a strong-Wolfe line search, plus Adam as a first-order fallback.

Both work on flat float64 vectors and an objective returning
``(value, gradient)``.
"""
import logging
from collections import deque
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)


@dataclass
class LbfgsConfig:
    memory: int = 50  # None means unlimited
    max_iter: int = 1000
    c1: float = 1e-4
    c2: float = 0.9
    max_ls: int = 25
    grad_tol: float = 1e-9
    step_tol: float = 1e-12

    def __post_init__(self):
        if not 0.0 < self.c1 < self.c2 < 1.0:
            raise ValueError(f"need 0 < c1 < c2 < 1, got c1={self.c1}, c2={self.c2}")
        if self.memory is not None and self.memory < 1:
            raise ValueError("memory must be >= 1")
        if self.max_ls < 1:
            raise ValueError("max_ls must be >= 1")


@dataclass
class OptimizeResult:
    x: np.ndarray
    f: float
    g: np.ndarray
    history: list = field(default_factory=list)
    n_iter: int = 0
    n_eval: int = 0
    status: str = "max-iter"
    fallback_steps: int = 0

    @property
    def success(self):
        return self.status in ("max-iter", "grad-tol", "step-tol", "callback")


def two_loop(g, S, Y, rho):
    """H_k g via the two-loop recursion (H0 = gamma I from the newest pair)."""
    q = g.copy()
    alphas = []
    for s, y, r in zip(reversed(S), reversed(Y), reversed(rho)):
        a = r * s.dot(q)
        alphas.append(a)
        q -= a * y
    if S:
        gamma = S[-1].dot(Y[-1]) / Y[-1].dot(Y[-1])
        q *= gamma
    for (s, y, r), a in zip(zip(S, Y, rho), reversed(alphas)):
        b = r * y.dot(q)
        q += (a - b) * s
    return q


def _cubic_min(x1, f1, g1, x2, f2, g2, lo, hi):
    """Minimiser of the cubic through two points with slopes, clipped to [lo, hi]."""
    d1 = g1 + g2 - 3.0 * (f1 - f2) / (x1 - x2)
    d2sq = d1 * d1 - g1 * g2
    if d2sq >= 0.0:
        d2 = np.sqrt(d2sq)
        if x1 <= x2:
            t = x2 - (x2 - x1) * ((g2 + d2 - d1) / (g2 - g1 + 2.0 * d2))
        else:
            t = x1 - (x1 - x2) * ((g1 + d2 - d1) / (g1 - g2 + 2.0 * d2))
        if np.isfinite(t):
            return min(max(t, lo), hi)
    return 0.5 * (lo + hi)


def strong_wolfe(fun, x, f, g, d, t, c1=1e-4, c2=0.9, max_ls=25):
    """Bracketing + zoom line search (Nocedal & Wright, Alg. 3.5/3.6).

    Returns ``(t, x_new, f_new, g_new, n_eval, wolfe_ok)``; ``x_new`` is the
    exact vector that was evaluated.
    """
    gtd = g.dot(d)
    n_eval = 0

    def phi(t):
        nonlocal n_eval
        n_eval += 1
        xt = x + t * d
        ft, gt = fun(xt)
        return xt, ft, gt, gt.dot(d)

    dnorm = np.abs(d).max()
    t_prev, f_prev, g_prev, x_prev, gtd_prev = 0.0, f, g, x, gtd
    x_new, f_new, g_new, gtd_new = phi(t)
    done = False
    bracket = None
    while n_eval < max_ls:
        if f_new > f + c1 * t * gtd or (n_eval > 1 and f_new >= f_prev):
            bracket = [(t_prev, f_prev, g_prev, x_prev, gtd_prev), (t, f_new, g_new, x_new, gtd_new)]
            break
        if abs(gtd_new) <= -c2 * gtd:
            return t, x_new, f_new, g_new, n_eval, True
        if gtd_new >= 0.0:
            bracket = [(t_prev, f_prev, g_prev, x_prev, gtd_prev), (t, f_new, g_new, x_new, gtd_new)]
            break
        lo, hi = t + 0.01 * (t - t_prev), t * 10.0
        t_next = _cubic_min(t_prev, f_prev, gtd_prev, t, f_new, gtd_new, lo, hi)
        t_prev, f_prev, g_prev, x_prev, gtd_prev = t, f_new, g_new, x_new, gtd_new
        t = t_next
        x_new, f_new, g_new, gtd_new = phi(t)
    if bracket is None:
        bracket = [(0.0, f, g, x, gtd), (t, f_new, g_new, x_new, gtd_new)]

    # zoom
    insufficient = False
    lo_i, hi_i = (0, 1) if bracket[0][1] <= bracket[1][1] else (1, 0)
    while not done and n_eval < max_ls:
        ta, tb = bracket[0][0], bracket[1][0]
        if abs(tb - ta) * dnorm < 1e-16:
            break
        t = _cubic_min(ta, bracket[0][1], bracket[0][4], tb, bracket[1][1], bracket[1][4],
                       min(ta, tb), max(ta, tb))
        tmax, tmin = max(ta, tb), min(ta, tb)
        eps = 0.1 * (tmax - tmin)
        if min(tmax - t, t - tmin) < eps:
            if insufficient or t >= tmax or t <= tmin:
                t = tmax - eps if abs(t - tmax) < abs(t - tmin) else tmin + eps
                insufficient = False
            else:
                insufficient = True
        else:
            insufficient = False
        x_new, f_new, g_new, gtd_new = phi(t)
        entry = (t, f_new, g_new, x_new, gtd_new)
        if f_new > f + c1 * t * gtd or f_new >= bracket[lo_i][1]:
            bracket[hi_i] = entry
        else:
            if abs(gtd_new) <= -c2 * gtd:
                done = True
            elif gtd_new * (bracket[hi_i][0] - bracket[lo_i][0]) >= 0.0:
                bracket[hi_i] = bracket[lo_i]
            bracket[lo_i] = entry
        lo_i, hi_i = (0, 1) if bracket[0][1] <= bracket[1][1] else (1, 0)
    t, f_new, g_new, x_new, _ = bracket[lo_i]
    return t, x_new, f_new, g_new, n_eval, done


def _backtrack(fun, x, f, g, d, t, c1=1e-4, shrink=0.5, max_tries=40):
    gtd = g.dot(d)
    n = 0
    for _ in range(max_tries):
        n += 1
        xt = x + t * d
        ft, gt = fun(xt)
        if ft <= f + c1 * t * gtd and ft < f:
            return xt, ft, gt, n, True
        t *= shrink
    return x, f, g, n, False


def minimize(fun, x0, cfg=None, callback=None):
    """Minimise ``fun`` (returning ``(f, grad)``) from ``x0`` with L-BFGS.

    Every accepted iterate satisfies the Armijo condition, so the recorded
    history is monotone.  ``callback(k, x, f)`` runs after each accepted
    step and may return True to stop.  If the Wolfe search fails the step
    falls back to steepest descent with backtracking; two consecutive
    failures end the run with status ``"line-search-failed"``.
    """
    cfg = cfg or LbfgsConfig()
    x = np.array(x0, dtype=np.float64)
    f, g = fun(x)
    res = OptimizeResult(x, f, g, [f], 0, 1, "max-iter")
    if np.abs(g).max(initial=0.0) <= cfg.grad_tol:
        res.status = "grad-tol"
        return res
    maxlen = cfg.memory
    S, Y, rho = deque(maxlen=maxlen), deque(maxlen=maxlen), deque(maxlen=maxlen)
    failures = 0
    for k in range(cfg.max_iter):
        d = -two_loop(g, S, Y, rho)
        gtd = g.dot(d)
        if not gtd < 0.0:
            S.clear(), Y.clear(), rho.clear()
            d = -g
            gtd = g.dot(d)
        t0 = min(1.0, 1.0 / np.abs(g).sum()) if not S else 1.0
        t, x_new, f_new, g_new, n, wolfe = strong_wolfe(fun, x, f, g, d, t0, cfg.c1, cfg.c2, cfg.max_ls)
        res.n_eval += n
        accepted = t > 0.0 and f_new <= f + cfg.c1 * t * gtd and f_new < f
        if not accepted:
            log.debug("line search failed at iteration %d; steepest-descent fallback", k)
            S.clear(), Y.clear(), rho.clear()
            d = -g
            x_new, f_new, g_new, n, accepted = _backtrack(
                fun, x, f, g, d, min(1.0, 1.0 / np.abs(g).sum()), cfg.c1)
            res.n_eval += n
            res.fallback_steps += 1
            if not accepted:
                failures += 1
                if failures >= 2:
                    res.status = "line-search-failed"
                    break
                continue
        failures = 0
        s = x_new - x
        y = g_new - g
        sy = s.dot(y)
        if sy > 1e-10 * np.linalg.norm(s) * np.linalg.norm(y):
            S.append(s)
            Y.append(y)
            rho.append(1.0 / sy)
        x, f, g = x_new, f_new, g_new
        res.x, res.f, res.g = x, f, g
        res.n_iter = k + 1
        res.history.append(f)
        if callback is not None and callback(k + 1, x, f):
            res.status = "callback"
            break
        if np.abs(g).max() <= cfg.grad_tol:
            res.status = "grad-tol"
            break
        if np.abs(s).max() <= cfg.step_tol:
            res.status = "step-tol"
            break
    return res


class Adam:
    """Bias-corrected Adam on flat vectors."""

    def __init__(self, lr=1e-3, betas=(0.9, 0.999), eps=1e-8):
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.m = None
        self.v = None
        self.t = 0

    def step(self, x, g):
        if self.m is None:
            self.m = np.zeros_like(x)
            self.v = np.zeros_like(x)
        self.t += 1
        self.m = self.b1 * self.m + (1.0 - self.b1) * g
        self.v = self.b2 * self.v + (1.0 - self.b2) * g * g
        mhat = self.m / (1.0 - self.b1 ** self.t)
        vhat = self.v / (1.0 - self.b2 ** self.t)
        return x - self.lr * mhat / (np.sqrt(vhat) + self.eps)


def adam_step(state, x, g):
    return state.step(x, g)


def adam_minimize(fun, x0, steps=1000, lr=1e-3, betas=(0.9, 0.999), eps=1e-8, callback=None):
    opt = Adam(lr, betas, eps)
    x = np.array(x0, dtype=np.float64)
    f, g = fun(x)
    res = OptimizeResult(x, f, g, [f], 0, 1, "max-iter")
    for k in range(steps):
        x = opt.step(x, g)
        f, g = fun(x)
        res.n_eval += 1
        res.x, res.f, res.g, res.n_iter = x, f, g, k + 1
        res.history.append(f)
        if callback is not None and callback(k + 1, x, f):
            res.status = "callback"
            break
    return res
