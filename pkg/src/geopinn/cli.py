"""Command-line entry point.

    geopinn eikonal --seed 0 --steps 1000 --out runs/eik
    geopinn stokes-tube --config stokes.yaml --plot off
    geopinn selftest

Exit codes: 0 success, 1 training or I/O failure, 2 usage or config error.
The default output directory is ``$GEOPINN_OUT/<experiment>`` (or
``runs/<experiment>`` when the variable is unset).
"""
import argparse
import copy
import csv
import datetime as _dt
import json
import logging
import os
import sys
import time

import numpy as np

from . import __version__
from ._kernels import USE_NUMBA
from .experiments import EXPERIMENTS, ConfigError, default_config, load_config, runner
from .experiments.config import validate
from .geometry import DiffeomorphismError
from .pinn import TrainingAborted
from .pullback import DegenerateGeometryError, SingularJacobianError

log = logging.getLogger("geopinn")

OUT_ENV = "GEOPINN_OUT"
MANIFEST_VERSION = 1
SUMMARY_KEYS = ("experiment", "l2_error", "final_loss", "steps", "n_eval", "seed", "wall_time_s",
                "status", "metrics")
LOSS_COLUMNS = ("step", "total", "interior", "boundary", "penalty")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(2, f"{self.prog}: error: {message}\n")


def build_parser():
    p = _Parser(prog="geopinn", description="PINNs on mapped reference domains.")
    p.add_argument("--version", action="version", version=f"geopinn {__version__}")
    sub = p.add_subparsers(dest="command", metavar="{" + ",".join(EXPERIMENTS + ("selftest",)) + "}")
    sub.required = True
    for name in EXPERIMENTS:
        s = sub.add_parser(name, help=f"run the {name} experiment")
        s.add_argument("--config", metavar="PATH", help="YAML config (or a run manifest.json)")
        s.add_argument("--seed", type=int, help="master seed (default from config, 0)")
        s.add_argument("--steps", type=int, help="L-BFGS iterations")
        s.add_argument("--out", metavar="DIR", help=f"output directory (default ${OUT_ENV}/<experiment>)")
        s.add_argument("--seeds", type=int, default=1, metavar="K", help="run K consecutive seeds")
        s.add_argument("--plot", choices=("on", "off"), default="on", help="write SVG plots")
        s.add_argument("-v", "--verbose", action="store_true")
    st = sub.add_parser("selftest", help="identity-transform and oracle checks")
    st.add_argument("-v", "--verbose", action="store_true")
    return p


# -- artifacts ----------------------------------------------------------------

def _num(v):
    """Locale-independent shortest round-trip text for a float."""
    return repr(float(v))


def _now():
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if np.isfinite(f) else None
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def _write_json(path, data):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_jsonable(data), fh, indent=2, sort_keys=True)
        fh.write("\n")


def artifact_paths(out, plot=True):
    names = {"manifest": "manifest.json", "fields": "fields.csv", "loss": "loss.csv", "summary": "summary.json"}
    paths = {k: os.path.join(out, v) for k, v in names.items()}
    if plot:
        paths["plots"] = os.path.join(out, "plot_*.svg")
    return paths


def write_manifest(cfg, out, plot=True, extra=None):
    manifest = {
        "manifest_version": MANIFEST_VERSION,
        "experiment": cfg.experiment,
        "seed": cfg.seed,
        "config": cfg.to_dict(),
        "artifacts": artifact_paths(out, plot),
        "engine": {"geopinn": __version__, "numpy": np.__version__, "numba_kernels": USE_NUMBA,
                   "python": sys.version.split()[0]},
        "started_at": _now(),
    }
    manifest.update(extra or {})
    _write_json(os.path.join(out, "manifest.json"), manifest)
    return manifest


def summary_of(report):
    return {
        "experiment": report.experiment,
        "l2_error": report.l2_error,
        "final_loss": report.final_loss,
        "steps": report.n_iter,
        "n_eval": report.n_eval,
        "seed": report.seed,
        "wall_time_s": report.wall_time,
        "status": report.status,
        "metrics": report.metrics,
    }


def export_fields(report, out, plot=True):
    """Write fields.csv, loss.csv, summary.json and (optionally) SVG plots."""
    local = np.atleast_2d(np.asarray(report.local, dtype=float))
    glob = np.asarray(report.global_, dtype=float)
    if glob.ndim == 1:
        glob = glob[:, None]
    names = list(report.values)
    header = ([f"x{i + 1}" for i in range(local.shape[1])] + [f"y{i + 1}" for i in range(glob.shape[1])]
              + names)
    cols = [local[:, i] for i in range(local.shape[1])] + [glob[:, i] for i in range(glob.shape[1])] \
        + [np.asarray(report.values[k], dtype=float).ravel() for k in names]
    with open(os.path.join(out, "fields.csv"), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in zip(*cols):
            w.writerow([_num(v) for v in row])
    with open(os.path.join(out, "loss.csv"), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(LOSS_COLUMNS)
        for h in report.history:
            w.writerow([str(h.step), _num(h.total), _num(h.interior), _num(h.boundary), _num(h.penalty)])
    _write_json(os.path.join(out, "summary.json"), summary_of(report))
    if report.snapshots:
        _write_json(os.path.join(out, "snapshots.json"), [{"step": k, "outline": s} for k, s in report.snapshots])
    written = [os.path.join(out, n) for n in ("fields.csv", "loss.csv", "summary.json")]
    if plot:
        written += write_plots(report, out)
    return written


def write_plots(report, out):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    paths = []

    def save(fig, name):
        path = os.path.join(out, f"plot_{name}.svg")
        fig.savefig(path, format="svg", bbox_inches="tight")
        plt.close(fig)
        paths.append(path)

    steps = [h.step for h in report.history]
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.semilogy(steps, [max(h.total, 1e-300) for h in report.history], label="total")
    ax.semilogy(steps, [max(h.interior, 1e-300) for h in report.history], label="interior", lw=0.8)
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.legend()
    save(fig, "loss")

    glob = np.asarray(report.global_, dtype=float)
    for name, vals in report.values.items():
        vals = np.asarray(vals, dtype=float).ravel()
        fig, ax = plt.subplots(figsize=(5, 4))
        if glob.ndim == 1 or glob.shape[1] == 1:
            ax.plot(np.asarray(report.local)[:, 0], vals)
            ax.set_xlabel("x")
        else:
            sc = ax.scatter(glob[:, 0], glob[:, 1], c=vals, s=4, cmap="viridis")
            fig.colorbar(sc, ax=ax)
            ax.set_aspect("equal")
            ax.set_xlabel("y1")
            ax.set_ylabel("y2")
        ax.set_title(name)
        save(fig, name)

    if report.snapshots:
        fig, ax = plt.subplots(figsize=(4.5, 4.5))
        for k, s in report.snapshots:
            s = np.asarray(s)
            closed = np.vstack([s, s[:1]])
            ax.plot(closed[:, 0], closed[:, 1], lw=0.8, label=f"step {k}")
        ax.set_aspect("equal")
        ax.legend(fontsize=7)
        save(fig, "outline")
    return paths


# -- commands -------------------------------------------------------------------

def resolve_config(args):
    cfg = load_config(args.config, args.command) if args.config else default_config(args.command)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.steps is not None:
        cfg.steps = args.steps
    if args.seeds < 1:
        raise ConfigError("--seeds: must be >= 1")
    return validate(cfg)


def run_one(cfg, out, plot):
    os.makedirs(out, exist_ok=True)
    write_manifest(cfg, out, plot)
    report = runner(cfg.experiment)(cfg)
    export_fields(report, out, plot)
    return report


def _print_summary(report, out):
    l2 = "n/a" if report.l2_error is None else f"{report.l2_error:.3e}"
    print(f"{report.experiment} seed={report.seed} steps={report.n_iter} status={report.status} "
          f"final_loss={report.final_loss:.3e} l2_error={l2} time={report.wall_time:.1f}s -> {out}")


def cmd_experiment(args):
    try:
        cfg = resolve_config(args)
    except ConfigError as exc:
        print(f"geopinn: config error: {exc}", file=sys.stderr)
        return 2
    base = args.out or os.path.join(os.environ.get(OUT_ENV) or "runs", cfg.experiment)
    seeds = [cfg.seed + k for k in range(args.seeds)]
    reports = []
    for s in seeds:
        cfg_s = copy.deepcopy(cfg)
        cfg_s.seed = s
        out = base if len(seeds) == 1 else os.path.join(base, f"seed_{s}")
        t0 = time.perf_counter()
        try:
            report = run_one(cfg_s, out, args.plot == "on")
        except TrainingAborted as exc:
            r = exc.result
            last = r.history[-1].total if r.history else float("nan")
            print(f"geopinn: training failed: {exc}\n  experiment={cfg.experiment} seed={s} "
                  f"accepted_steps={len(r.history) - 1} last_loss={last:.6e} "
                  f"evaluations={r.n_eval} elapsed={time.perf_counter() - t0:.1f}s", file=sys.stderr)
            return 1
        except (DiffeomorphismError, SingularJacobianError, DegenerateGeometryError, ArithmeticError) as exc:
            print(f"geopinn: training failed: {type(exc).__name__}: {exc}\n  experiment={cfg.experiment} "
                  f"seed={s}", file=sys.stderr)
            return 1
        except OSError as exc:
            print(f"geopinn: cannot write artifacts to {out}: {exc}", file=sys.stderr)
            return 1
        reports.append((report, out))
        _print_summary(report, out)
    if len(reports) > 1:
        l2 = [r.l2_error for r, _ in reports if r.l2_error is not None]
        sweep = {"seeds": seeds, "summaries": [summary_of(r) for r, _ in reports],
                 "l2_median": float(np.median(l2)) if l2 else None,
                 "l2_max": float(np.max(l2)) if l2 else None}
        try:
            _write_json(os.path.join(base, "sweep.json"), sweep)
        except OSError as exc:
            print(f"geopinn: cannot write artifacts to {base}: {exc}", file=sys.stderr)
            return 1
        if l2:
            print(f"sweep: median l2_error={sweep['l2_median']:.3e} max={sweep['l2_max']:.3e}")
    return 0


def cmd_selftest(args):
    from .selftest import run_all

    results = run_all()
    for name, ok, detail in results:
        print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    failed = sum(not ok for _, ok, _ in results)
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return 0 if failed == 0 else 1


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "selftest":
        return cmd_selftest(args)
    return cmd_experiment(args)


if __name__ == "__main__":
    sys.exit(main())
