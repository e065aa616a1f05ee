import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from geopinn import _kernels as K
from geopinn import autodiff as ad


def _graph(seed):
    """A random scalar graph and its flat arrays."""
    rng = np.random.default_rng(seed)
    ctx = ad.DiffContext()
    xs = ctx.variables(rng.uniform(0.5, 1.5, size=4))
    nodes = list(xs)
    for _ in range(40):
        a, b = rng.choice(len(nodes), size=2)
        kind = rng.integers(0, 6)
        x, y = nodes[a], nodes[b]
        new = [x + y, x * y, x - y, ad.tanh(x), ad.sin(x) * 0.5, x / (1.0 + y * y)][kind]
        nodes.append(new)
    out = nodes[-1]
    for n in nodes[-6:-1]:
        out = out + n
    return ctx, xs, out


@pytest.mark.skipif(not K.USE_NUMBA, reason="numba kernels disabled")
@given(seed=st.integers(0, 10_000))
def test_compiled_kernels_match_python(seed):
    ctx, xs, out = _graph(seed)
    op, a, b, val, param = ctx.arrays()
    n = out.id
    np.testing.assert_array_equal(K.dependency_mask(op, a, b, np.array([xs[0].id]), n),
                                  K.py_dependency_mask(op, a, b, np.array([xs[0].id]), n))
    np.testing.assert_allclose(K.reverse_sweep(op, a, b, val, param, n, 0),
                               K.py_reverse_sweep(op, a, b, val, param, n, 0), rtol=1e-15, atol=0)
    v1 = K.forward_sweep(op, a, b, val.copy(), param, 0, n)
    v2 = K.py_forward_sweep(op, a, b, val.copy(), param, 0, n)
    # compiled sin/tanh may differ from numpy's by an ulp or so
    np.testing.assert_allclose(v1, v2, rtol=1e-12, atol=1e-14)
    np.testing.assert_allclose(v2[:n + 1], val[:n + 1], rtol=1e-12, atol=1e-14)


def test_tanh_kernels_match_python():
    rng = np.random.default_rng(1)
    g, gout, t = rng.normal(size=(3, 7, 5))
    np.testing.assert_allclose(K.tanh_grad(g, t), K.py_tanh_grad(g, t), rtol=1e-15)
    np.testing.assert_allclose(K.tanh_grad_t(g, gout, t), K.py_tanh_grad_t(g, gout, t), rtol=1e-15)
    # broadcast shapes go through the numpy path
    np.testing.assert_allclose(K.tanh_grad(g[:1], t), K.py_tanh_grad(g[:1], t), rtol=1e-15)


def test_env_flag_selects_fallback():
    code = ("from geopinn import _kernels as K; "
            "print(K.USE_NUMBA, K.reverse_sweep is K.py_reverse_sweep)")
    env = dict(os.environ, GEOPINN_DISABLE_NUMBA="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.split() == ["False", "True"]


def test_fallback_gives_identical_gradients():
    code = (
        "import numpy as np\n"
        "from geopinn import autodiff as ad\n"
        "ctx = ad.DiffContext(); xs = ctx.variables([0.3, 0.7, 1.1])\n"
        "f = ad.tanh(xs[0] * xs[1]) * ad.exp(xs[2]) + xs[0] / (1 + xs[2] * xs[2])\n"
        "print(repr(ad.gradient(f, xs)))\n"
    )
    outs = []
    for flag in ("0", "1"):
        env = dict(os.environ, GEOPINN_DISABLE_NUMBA=flag)
        outs.append(subprocess.run([sys.executable, "-c", code], env=env, capture_output=True,
                                   text=True, check=True).stdout)
    assert outs[0] == outs[1]
