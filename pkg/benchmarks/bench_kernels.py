"""Time the numba kernels against the pure-numpy fallback.

Each backend runs in its own interpreter because the choice is made once,
at import, from ``GEOPINN_DISABLE_NUMBA``.

    python3 benchmarks/bench_kernels.py [--nodes 20000] [--repeat 5]
"""
import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np


def _best(fn, repeat):
    fn()  # warm-up (JIT compile, caches)
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def _graph(n_nodes, seed=0):
    from geopinn import autodiff as ad

    rng = np.random.default_rng(seed)
    ctx = ad.DiffContext()
    nodes = list(ctx.variables(rng.uniform(0.5, 1.5, size=8)))
    while len(ctx) < n_nodes:
        i, j = rng.integers(len(nodes), size=2)
        x, y = nodes[i], nodes[j]
        k = rng.integers(4)
        nodes.append([x + y, x * y, ad.tanh(x), ad.sin(y) * 0.5][k])
    return ctx, nodes[0], nodes[-1]


def child(n_nodes, repeat):
    from geopinn import _kernels as K
    from geopinn import network
    from geopinn.experiments import default_config, eikonal
    from geopinn.pinn import scalar_loss

    ctx, x0, out = _graph(n_nodes)
    op, a, b, val, param = ctx.arrays()
    n = out.id
    starts = np.array([x0.id])
    rng = np.random.default_rng(1)
    g, t = rng.normal(size=(2, 1024, 128))

    problem = eikonal.build(default_config("eikonal"))[0]
    nets = [network.init([2, 16, 16, 1], seed=0)]
    pts = np.linspace(0.05, 1.0, 8)[:, None]

    res = {
        "numba": K.USE_NUMBA,
        "reverse_sweep": _best(lambda: K.reverse_sweep(op, a, b, val, param, n, 0), repeat),
        "forward_sweep": _best(lambda: K.forward_sweep(op, a, b, val.copy(), param, 0, n), repeat),
        "dependency_mask": _best(lambda: K.dependency_mask(op, a, b, starts, n), repeat),
        "tanh_grad_1024x128": _best(lambda: K.tanh_grad(g, t), repeat),
        "scalar_loss_eikonal_8pts": _best(lambda: scalar_loss(problem, nets, pts, np.array([[0.0]])),
                                          max(1, repeat // 2)),
    }
    print(json.dumps(res))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--nodes", type=int, default=20000)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--child", action="store_true", help=argparse.SUPPRESS)
    args = ap.parse_args()
    if args.child:
        child(args.nodes, args.repeat)
        return

    rows = {}
    for flag in ("0", "1"):
        env = dict(os.environ, GEOPINN_DISABLE_NUMBA=flag)
        cmd = [sys.executable, __file__, "--child", "--nodes", str(args.nodes), "--repeat", str(args.repeat)]
        out = subprocess.run(cmd, env=env, check=True, capture_output=True, text=True).stdout
        rows[flag] = json.loads(out.strip().splitlines()[-1])

    jit, py = rows["0"], rows["1"]
    if not jit["numba"]:
        print("numba is unavailable; both runs used the fallback")
    print(f"{'kernel':28s} {'numba (ms)':>12s} {'numpy (ms)':>12s} {'speed-up':>9s}")
    for key in jit:
        if key == "numba":
            continue
        print(f"{key:28s} {1e3 * jit[key]:12.3f} {1e3 * py[key]:12.3f} {py[key] / jit[key]:8.1f}x")


if __name__ == "__main__":
    main()
