import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from geopinn import autodiff as ad
from geopinn import geometry as geo
from geopinn import network
from geopinn.autodiff import tensor as T
from geopinn.experiments.eikonal import arc_length_closed_form
from geopinn.pullback import (
    MANIFOLD,
    TRANSFORMATION,
    ComposedField,
    OutputTransform,
    SingularJacobianError,
    TransformFrame,
    arclength_derivative,
    arclength_derivative_of,
    curve_speed,
    global_divergence,
    global_gradient,
    global_hessian,
    global_laplacian,
    local_bundle,
    local_derivatives,
)


class Stretch1D(geo.Diffeo):
    """y = x + x^2 / 2 on [0, 1]; y' = 1 + x, y'' = 1."""

    m = n = 1

    def map(self, xs):
        (x,) = xs
        return [x + 0.5 * x * x]


def _cols(pts):
    return [T.variable(pts[:, j]) for j in range(pts.shape[1])]


def _rel(a, b):
    a, b = np.asarray(ad.value_of(a), dtype=float), np.asarray(b, dtype=float)
    return float(np.max(np.abs(a - b) / np.maximum(np.abs(b), 1e-300)))


PTS = np.random.default_rng(42).uniform(0.02, 0.98, size=(100, 2))


def _analytic_field(diffeo, U):
    return ComposedField(lambda xs: [U(diffeo.map(xs))], diffeo, TRANSFORMATION)


# u(y) = y1^2 y2 + sin(y2) + exp(0.3 y1)
def U2(ys):
    return ys[0] * ys[0] * ys[1] + ad.sin(ys[1]) + ad.exp(0.3 * ys[0])


def U2_derivs(y1, y2):
    g = (2 * y1 * y2 + 0.3 * np.exp(0.3 * y1), y1 * y1 + np.cos(y2))
    H = ((2 * y2 + 0.09 * np.exp(0.3 * y1), 2 * y1), (2 * y1, -np.sin(y2)))
    return g, H


@pytest.mark.parametrize("diffeo", [geo.Scaling(2.5), geo.tube(), geo.tube(0.05, 2 * math.pi, 0.3)],
                         ids=["scaling", "tube", "tube-variant"])
def test_composition_oracle_2d(diffeo):
    xs = _cols(PTS)
    field = _analytic_field(diffeo, U2)
    y = diffeo.evaluate(PTS)
    (g1, g2), H = U2_derivs(y[:, 0], y[:, 1])
    g = global_gradient(field, xs)
    assert _rel(g[0], g1) < 1e-8 and _rel(g[1], g2) < 1e-8
    Hn = global_hessian(field, xs)
    for i in range(2):
        for j in range(2):
            assert _rel(Hn[i][j], H[i][j]) < 1e-8
    assert _rel(global_laplacian(field, xs), H[0][0] + H[1][1]) < 1e-8


def test_composition_oracle_1d_nonlinear():
    pts = np.linspace(0.0, 1.0, 100)[:, None]
    d = Stretch1D()
    field = _analytic_field(d, lambda ys: ad.sin(ys[0]))
    xs = _cols(pts)
    y = pts[:, 0] + 0.5 * pts[:, 0] ** 2
    frame = TransformFrame(d, xs)
    u = field(xs)
    g = frame.gradient(u)
    assert _rel(g[0], np.cos(y)) < 1e-8
    assert _rel(frame.hessian(u, g)[0][0], -np.sin(y)) < 1e-8


@given(seed=st.integers(0, 10_000))
def test_identity_transform_equivalence(seed):
    net = network.init([2, 12, 12, 1], seed=seed)
    xs = _cols(PTS[:20])
    u = net(xs)[0]
    local = local_derivatives(u, xs)
    field = ComposedField(net, geo.identity(2), TRANSFORMATION)
    g = global_gradient(field, xs)
    H = global_hessian(field, xs)
    for i in range(2):
        assert np.max(np.abs(ad.value_of(g[i]) - ad.value_of(local.grad[i]))) <= 1e-12
        for j in range(2):
            assert np.max(np.abs(ad.value_of(H[i][j]) - ad.value_of(local.hess[i][j]))) <= 1e-12


@pytest.mark.parametrize("diffeo", [geo.tube(), geo.Scaling(0.7)], ids=["tube", "scaling"])
def test_chain_rule_identity(diffeo):
    # local gradient of the composed field = J^T (global gradient)
    net = network.init([2, 16, 1], seed=1)
    xs = _cols(PTS)
    field = ComposedField(net, diffeo, TRANSFORMATION)
    u = field(xs)
    local = ad.derivatives(u, xs)
    frame = TransformFrame(diffeo, xs)
    glob = frame.gradient(u)
    J = [[ad.value_of(frame.jac[i][j]) for j in range(2)] for i in range(2)]
    for j in range(2):
        jt_g = sum(np.asarray(J[i][j]) * ad.value_of(glob[i]) for i in range(2))
        scale = np.maximum(np.abs(ad.value_of(local[j])), 1.0)
        assert np.max(np.abs(jt_g - ad.value_of(local[j])) / scale) <= 1e-10


def test_divergence_of_position_field():
    d = geo.tube()
    xs = _cols(PTS)
    fields = [_analytic_field(d, lambda ys: ys[0]), _analytic_field(d, lambda ys: ys[1])]
    div = global_divergence(fields, xs)
    np.testing.assert_allclose(ad.value_of(div), 2.0, rtol=1e-13)


def test_scalar_engine_agrees_with_batched():
    d = geo.tube()
    net = network.init([2, 8, 1], seed=2)
    xs = _cols(PTS[:5])
    lap_t = ad.value_of(global_laplacian(ComposedField(net, d, TRANSFORMATION), xs))
    for k, p in enumerate(PTS[:5]):
        ctx = ad.DiffContext()
        xk = ctx.variables(p)
        lap_s = global_laplacian(ComposedField(net, d, TRANSFORMATION), xk).value
        assert abs(lap_s - lap_t[k]) <= 1e-12 * max(1.0, abs(lap_s))


def test_singular_jacobian_raises():
    with pytest.raises(SingularJacobianError):
        TransformFrame(geo.Scaling(0.0), _cols(PTS[:3]))

    class Fold(geo.Diffeo):
        m = n = 2

        def map(self, xs):
            return [xs[0] * xs[0], xs[1]]

    TransformFrame(Fold(), _cols(PTS[:3]))  # fine away from x1 = 0
    with pytest.raises(SingularJacobianError):
        TransformFrame(Fold(), _cols(np.array([[0.0, 0.5], [0.5, 0.5]])))


def test_transformation_mode_rejects_manifold():
    with pytest.raises(ValueError):
        TransformFrame(geo.sphere_patch(), _cols(PTS[:3]))


class TestManifold:
    def test_arclength_derivative_of_arc_length_is_one(self):
        d = geo.spiral()
        x = T.variable(np.linspace(0.0, 1.0, 100))

        def L(xs):  # a/2 (t sqrt(1+t^2) + asinh t), t = l x
            t = d.l * xs[0]
            s = ad.sqrt(1.0 + t * t)
            return 0.5 * d.a * (t * s + ad.log(t + s))

        r = arclength_derivative_of(L([x]), [x], curve_speed(d, [x]))
        np.testing.assert_allclose(ad.value_of(r), 1.0, rtol=1e-12)
        np.testing.assert_allclose(ad.value_of(L([x])), arc_length_closed_form(x.value), rtol=1e-13, atol=1e-15)

    def test_arclength_derivative_of_field(self):
        # u(y) = |y|^2 along the spiral: d/ds = 2 y . phi' / |phi'|
        d = geo.spiral()
        pts = np.linspace(0.05, 1.0, 50)
        field = ComposedField(lambda ys: [ys[0] * ys[0] + ys[1] * ys[1]], d, MANIFOLD)
        r = arclength_derivative(field, [T.variable(pts)])
        # |y|^2 = (a l x)^2, so d/dx = 2 (a l)^2 x
        want = 2 * (d.a * d.l) ** 2 * pts / d.speed(pts)
        np.testing.assert_allclose(ad.value_of(r), want, rtol=1e-12)

    def test_local_laplacian_of_manufactured_solution(self):
        xs = _cols(PTS)
        u = ad.sin(math.pi * xs[0]) * ad.sin(math.pi * xs[1])
        lap = local_derivatives(u, xs, hessian="diag").laplacian()
        np.testing.assert_allclose(ad.value_of(lap), -2 * math.pi ** 2 * ad.value_of(u), rtol=1e-12, atol=1e-12)

    def test_manifold_field_sees_global_points(self):
        d = geo.sphere_patch()
        seen = {}

        def net(ys):
            seen["n"] = len(ys)
            return [ys[0] + ys[1] + ys[2]]

        b = local_bundle(ComposedField(net, d, MANIFOLD), _cols(PTS[:4]))
        assert seen["n"] == 3
        assert len(b.grad) == 2


@given(seed=st.integers(0, 10_000))
def test_exact_bc_transform_hits_boundary_data(seed):
    net = network.init([2, 10, 3], seed=seed)
    square = geo.DistanceFn("square")
    ot = OutputTransform([square, square, geo.DistanceFn("square-right")],
                         [lambda xs: 4 * xs[1] * (1 - xs[1]), None, None])
    zb = geo.sample_boundary(geo.unit_square(), 40)
    u, v, p = ComposedField(net, geo.tube(), TRANSFORMATION, ot).outputs([zb[:, 0], zb[:, 1]])
    assert np.max(np.abs(u - 4 * zb[:, 1] * (1 - zb[:, 1]))) <= 1e-12
    assert np.max(np.abs(v)) == 0.0
    assert np.max(np.abs(p[zb[:, 0] == 1.0])) == 0.0
