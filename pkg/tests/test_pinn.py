import numpy as np
import pytest

from geopinn import geometry as geo
from geopinn import network
from geopinn.experiments import default_config
from geopinn.experiments import eikonal, poisson, shape, stokes
from geopinn.optimize import LbfgsConfig
from geopinn.pinn import (
    EXACT,
    WEAK,
    BatchedLoss,
    PdeProblem,
    TrainingAborted,
    pack,
    scalar_loss,
    train,
    unpack,
)


def small_case(name):
    """(problem, nets, interior, boundary) at toy sizes for each experiment."""
    cfg = default_config(name)
    rng = np.random.default_rng(0)
    if name == "eikonal":
        problem = eikonal.build(cfg)[0]
        nets = [network.init([2, 6, 6, 1], seed=1)]
        return problem, nets, rng.uniform(0.05, 1, size=(6, 1)), np.array([[0.0]])
    pts = rng.uniform(0.05, 0.95, size=(5, 2))
    bnd = geo.sample_boundary(geo.unit_square(), 8)
    if name == "poisson-sphere":
        return poisson.build(cfg)[0], [network.init([3, 6, 6, 1], seed=1)], pts, bnd
    if name == "stokes-tube":
        return stokes.build(cfg)[0], [network.init([2, 6, 6, 3], seed=1)], pts, bnd
    # a random tiny map is nearly singular; use O(1) weights with det J > 0 at these points
    phi = network.init([2, 6, 2], seed=2)
    phi.set_params(np.random.default_rng(5).normal(size=phi.n_params))
    return shape.build(cfg), [network.init([2, 6, 1], seed=1), phi], pts, bnd


NAMES = ["eikonal", "poisson-sphere", "stokes-tube", "shape-opt"]


def _perturbed(nets, seed=3, scale=0.05):
    theta = pack(nets)
    return theta + scale * np.random.default_rng(seed).normal(size=theta.shape)


@pytest.mark.parametrize("name", NAMES)
def test_batched_and_scalar_losses_agree(name):
    problem, nets, xi, xb = small_case(name)
    theta = _perturbed(nets)
    report, g_batched = BatchedLoss(problem, nets, xi, xb).evaluate(theta)
    f_scalar, g_scalar = scalar_loss(problem, nets, xi, xb, theta)
    expect = report.interior + (report.weight * report.boundary if problem.bc == WEAK else 0.0) + report.penalty
    assert report.total == pytest.approx(expect, rel=1e-14)
    assert f_scalar == pytest.approx(report.total, rel=1e-12)
    np.testing.assert_allclose(g_scalar, g_batched, rtol=1e-9, atol=1e-12 * np.abs(g_batched).max())


@pytest.mark.parametrize("name", ["eikonal", "stokes-tube"])
def test_rollback_matches_monolithic_graph(name):
    problem, nets, xi, xb = small_case(name)
    theta = _perturbed(nets)
    f1, g1 = scalar_loss(problem, nets, xi, xb, theta, rollback=True)
    f2, g2 = scalar_loss(problem, nets, xi, xb, theta, rollback=False)
    assert f1 == pytest.approx(f2, rel=1e-13)
    np.testing.assert_allclose(g1, g2, rtol=1e-11, atol=1e-14)


@pytest.mark.parametrize("name", NAMES)
def test_gradient_matches_central_differences(name):
    problem, nets, xi, xb = small_case(name)
    loss = BatchedLoss(problem, nets, xi, xb)
    theta = _perturbed(nets)
    _, g = loss.evaluate(theta)
    rng = np.random.default_rng(5)
    for k in rng.choice(len(theta), size=min(10, len(theta)), replace=False):
        h = 1e-6 * max(1.0, abs(theta[k]))
        e = np.zeros_like(theta)
        e[k] = h
        fd = (loss(theta + e)[0] - loss(theta - e)[0]) / (2 * h)
        assert abs(fd - g[k]) <= 1e-5 * max(abs(g[k]), 1e-3)


def test_exact_bc_boundary_loss_is_zero():
    problem, nets, xi, xb = small_case("stokes-tube")
    report, _ = BatchedLoss(problem, nets, xi, xb).evaluate(_perturbed(nets))
    assert report.boundary == 0.0


def test_train_history_monotone_and_nets_updated():
    problem, nets, xi, xb = small_case("eikonal")
    colloc = geo.CollocationSet(xi, xb)
    before = pack(nets).copy()
    res = train(problem, nets, colloc, LbfgsConfig(max_iter=15))
    totals = [h.total for h in res.history]
    assert [h.step for h in res.history] == list(range(len(totals)))
    assert all(b < a for a, b in zip(totals, totals[1:]))
    assert not np.array_equal(pack(nets), before)
    assert res.history[-1].total == pytest.approx(BatchedLoss(problem, nets, xi, xb).evaluate(pack(nets))[0].total)


def test_train_is_deterministic():
    out = []
    for _ in range(2):
        problem, nets, xi, xb = small_case("poisson-sphere")
        res = train(problem, nets, geo.CollocationSet(xi, xb), LbfgsConfig(max_iter=8))
        out.append([h.total for h in res.history])
    assert out[0] == out[1]


@pytest.mark.filterwarnings("ignore:overflow")
def test_nonfinite_loss_aborts_with_last_good_parameters():
    calls = {"n": 0}

    def residuals(nets, xs):
        calls["n"] += 1
        u = nets[0](xs)[0]
        return [u * 1e200 * 1e200] if calls["n"] > 3 else [u - 1.0]

    problem = PdeProblem("blowup", "manifold", residuals, bc=EXACT)
    nets = [network.init([1, 4, 1], seed=0)]
    with pytest.raises(TrainingAborted) as info:
        train(problem, nets, geo.CollocationSet(np.array([[0.5], [0.25]]), np.empty((0, 1))),
              LbfgsConfig(max_iter=20))
    assert info.value.result.history
    assert np.all(np.isfinite(pack(nets)))


def test_weak_bc_needs_boundary_rule():
    with pytest.raises(ValueError):
        PdeProblem("x", "manifold", lambda n, x: [], bc=WEAK)


def test_pack_unpack_round_trip():
    nets = [network.init([2, 3, 1], seed=0), network.init([2, 4, 2], seed=1)]
    theta = np.arange(len(pack(nets)), dtype=float)
    unpack(nets, theta)
    np.testing.assert_array_equal(pack(nets), theta)
