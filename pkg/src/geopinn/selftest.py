"""Quick internal consistency checks behind ``geopinn selftest``.

Each check returns ``(name, ok, detail)``.  They are cheap (a few seconds
in total) and exercise the identity-map equivalence, analytic composition
oracles, both differentiation engines and the optimizer.
"""
import numpy as np

from . import autodiff as ad
from . import geometry as geo
from . import network
from .autodiff import tensor as T
from .optimize import LbfgsConfig, minimize
from .pullback import TRANSFORMATION, ComposedField, TransformFrame, local_derivatives


def _points(n=50, seed=7):
    rng = np.random.default_rng(seed)
    return rng.uniform(0.05, 0.95, size=(n, 2))


def _rel(a, b):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(np.max(np.abs(a - b) / np.maximum(1.0, np.abs(b))))


def check_identity_equivalence():
    net = network.init([2, 16, 16, 1], seed=3)
    pts = _points()
    xs = [T.variable(pts[:, 0]), T.variable(pts[:, 1])]
    u = net(xs)[0]
    local = local_derivatives(u, xs, hessian="full")
    frame = TransformFrame(geo.identity(2), xs)
    g = frame.gradient(u)
    lap = frame.laplacian(u, g)
    err = max(_rel(ad.value_of(g[i]), ad.value_of(local.grad[i])) for i in range(2))
    err = max(err, _rel(ad.value_of(lap), ad.value_of(local.laplacian())))
    return "identity map leaves derivatives unchanged", err <= 1e-12, f"max rel err {err:.2e}"


def _poly(ys):
    y1, y2 = ys
    return y1 * y1 * y2 + ad.sin(y2)


def _poly_grad_lap(y1, y2):
    return (2 * y1 * y2, y1 * y1 + np.cos(y2)), 2 * y2 - np.sin(y2)


def check_composition(diffeo, label):
    pts = _points()
    xs = [T.variable(pts[:, 0]), T.variable(pts[:, 1])]
    field = ComposedField(lambda x: [_poly(diffeo.map(x))], diffeo, TRANSFORMATION)
    u = field(xs)
    frame = TransformFrame(diffeo, xs)
    g = frame.gradient(u)
    lap = frame.laplacian(u, g)
    y = diffeo.evaluate(pts)
    (g1, g2), lap_ref = _poly_grad_lap(y[:, 0], y[:, 1])
    err = max(_rel(ad.value_of(g[0]), g1), _rel(ad.value_of(g[1]), g2), _rel(ad.value_of(lap), lap_ref))
    return f"pullback through {label} matches analytic derivatives", err <= 1e-8, f"max rel err {err:.2e}"


def check_arc_length():
    from .experiments.eikonal import arc_length_closed_form, arc_length_oracle

    x = np.linspace(0.0, 1.0, 11)
    err = float(np.max(np.abs(arc_length_oracle(x) - arc_length_closed_form(x))))
    return "arc-length quadrature agrees with closed form", err <= 1e-9, f"max abs err {err:.2e}"


def check_engines_agree():
    net = network.init([2, 8, 8, 1], seed=11)
    pts = _points(5)
    xs_t = [T.variable(pts[:, 0]), T.variable(pts[:, 1])]
    lap_t = ad.value_of(local_derivatives(net(xs_t)[0], xs_t, hessian="diag").laplacian())
    lap_s = []
    for p in pts:
        ctx = ad.DiffContext()
        xs = ctx.variables(p)
        lap_s.append(local_derivatives(net(xs)[0], xs, hessian="diag").laplacian().value)
    err = _rel(lap_t, lap_s)
    return "scalar and batched engines agree on a Laplacian", err <= 1e-12, f"max rel err {err:.2e}"


def check_quadratic():
    rng = np.random.default_rng(0)
    m = rng.normal(size=(6, 6))
    a = m @ m.T + 6 * np.eye(6)
    b = rng.normal(size=6)
    res = minimize(lambda x: (0.5 * x @ a @ x - b @ x, a @ x - b), np.zeros(6),
                   LbfgsConfig(max_iter=50, c1=1e-5, c2=1e-4))
    err = float(np.max(np.abs(res.x - np.linalg.solve(a, b))))
    ok = err <= 1e-8 and res.n_iter <= 7
    return "L-BFGS solves a 6-D quadratic", ok, f"{res.n_iter} iterations, max err {err:.2e}"


def run_all():
    checks = [
        check_identity_equivalence,
        lambda: check_composition(geo.Scaling(2.0), "scaling"),
        lambda: check_composition(geo.tube(), "tube"),
        check_arc_length,
        check_engines_agree,
        check_quadratic,
    ]
    out = []
    for c in checks:
        try:
            out.append(c())
        except Exception as exc:  # a crash is a failed check, not a crashed selftest
            out.append((getattr(c, "__name__", "check"), False, f"{type(exc).__name__}: {exc}"))
    return out


__all__ = ["run_all"]
