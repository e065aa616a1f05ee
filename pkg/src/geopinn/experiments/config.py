"""Experiment configuration: defaults, YAML loading and validation.

Schema (every key optional; unspecified keys take the defaults of the
chosen experiment)::

    experiment: eikonal | poisson-sphere | stokes-tube | shape-opt
    seed: 0
    steps: 1000
    snapshot_every: 0
    network:
      widths: [2, 128, 128, 128, 1]
      activation: tanh
      phi_widths: [2, 1024, 2]     # shape-opt only
      layout: vector               # stokes-tube: vector | separate
    geometry: {...}                # l, a | psi0, theta0 | amp, freq, base
    collocation:
      n_interior: 1024
      n_boundary: 256
      strategy: grid               # grid | random
    optimizer:
      memory: 50
      c1: 1.0e-4
      c2: 0.9
      max_ls: 25
      grad_tol: 1.0e-9
      step_tol: 1.0e-12
      stop_rel_change: 0.0         # > 0 stops when |df|/|f| < tol ...
      stop_window: 3               # ... over this many consecutive steps
    bc:
      style: exact                 # exact | weak
      weight: 1.0
      corner_weight: 100.0         # shape-opt only
"""
import copy
import math
import re
from dataclasses import asdict, dataclass, field, fields

import yaml

EXPERIMENTS = ("eikonal", "poisson-sphere", "stokes-tube", "shape-opt")


class ConfigError(ValueError):
    pass


@dataclass
class NetworkCfg:
    widths: list = field(default_factory=lambda: [2, 128, 128, 128, 1])
    activation: str = "tanh"
    phi_widths: list = field(default_factory=lambda: [2, 1024, 2])
    layout: str = "vector"


@dataclass
class CollocationCfg:
    n_interior: int = 1024
    n_boundary: int = 256
    strategy: str = "grid"


@dataclass
class OptimizerCfg:
    memory: int = 50
    c1: float = 1e-4
    c2: float = 0.9
    max_ls: int = 25
    grad_tol: float = 1e-9
    step_tol: float = 1e-12
    stop_rel_change: float = 0.0
    stop_window: int = 3


@dataclass
class BcCfg:
    style: str = "exact"
    weight: float = 1.0
    corner_weight: float = 100.0


@dataclass
class ExperimentConfig:
    experiment: str = "eikonal"
    seed: int = 0
    steps: int = 1000
    snapshot_every: int = 0
    network: NetworkCfg = field(default_factory=NetworkCfg)
    geometry: dict = field(default_factory=dict)
    collocation: CollocationCfg = field(default_factory=CollocationCfg)
    optimizer: OptimizerCfg = field(default_factory=OptimizerCfg)
    bc: BcCfg = field(default_factory=BcCfg)

    def to_dict(self):
        return asdict(self)


GEOMETRY_DEFAULTS = {
    "eikonal": {"l": 3.5 * math.pi, "a": 0.1},
    "poisson-sphere": {"psi0": 0.5, "theta0": 1.0},
    "stokes-tube": {"amp": 0.1, "freq": 3.0 * math.pi, "base": 0.2},
    "shape-opt": {},
}

_OVERRIDES = {
    "eikonal": {"network": {"widths": [2, 128, 128, 128, 1]},
                "collocation": {"n_interior": 1024, "n_boundary": 2}},
    "poisson-sphere": {"network": {"widths": [3, 128, 128, 128, 1]}},
    "stokes-tube": {"steps": 5000, "network": {"widths": [2, 128, 128, 128, 3]}},
    "shape-opt": {
        "steps": 200,
        "snapshot_every": 5,
        "network": {"widths": [2, 1024, 1], "phi_widths": [2, 1024, 2]},
        "optimizer": {"stop_rel_change": 1e-8, "stop_window": 3},
        "bc": {"style": "weak", "weight": 1.0, "corner_weight": 100.0},
    },
}

_SECTIONS = {"network": NetworkCfg, "collocation": CollocationCfg, "optimizer": OptimizerCfg, "bc": BcCfg}
_TOP = {"experiment": str, "seed": int, "steps": int, "snapshot_every": int}


def default_config(experiment):
    if experiment not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {experiment!r}; valid: {', '.join(EXPERIMENTS)}")
    raw = {"experiment": experiment, "geometry": dict(GEOMETRY_DEFAULTS[experiment])}
    _merge(raw, copy.deepcopy(_OVERRIDES[experiment]))
    return _build(raw)


def _merge(dst, src):
    for k, v in src.items():
        if isinstance(v, dict) and isinstance(dst.get(k), dict):
            _merge(dst[k], v)
        else:
            dst[k] = v
    return dst


def _check_type(path, value, expected):
    if expected is float:
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
    elif expected is int:
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif expected is list:
        ok = isinstance(value, list) and all(isinstance(v, int) and not isinstance(v, bool) for v in value)
    else:
        ok = isinstance(value, expected)
    if not ok:
        raise ConfigError(f"{path}: expected {expected.__name__}, got {type(value).__name__} ({value!r})")
    return float(value) if expected is float else value


def _build(raw):
    cfg = ExperimentConfig()
    for key, value in raw.items():
        if key in _TOP:
            setattr(cfg, key, _check_type(key, value, _TOP[key]))
        elif key == "geometry":
            if not isinstance(value, dict):
                raise ConfigError("geometry: expected a mapping")
            cfg.geometry = dict(value)
        elif key in _SECTIONS:
            if not isinstance(value, dict):
                raise ConfigError(f"{key}: expected a mapping")
            section = getattr(cfg, key)
            types = {f.name: f.type for f in fields(_SECTIONS[key])}
            for k, v in value.items():
                if k not in types:
                    raise ConfigError(f"{key}.{k}: unknown key; valid keys: {', '.join(types)}")
                t = {"list": list, "str": str, "int": int, "float": float}[types[k]] \
                    if isinstance(types[k], str) else types[k]
                if k == "memory" and v is None:
                    setattr(section, k, None)
                    continue
                setattr(section, k, _check_type(f"{key}.{k}", v, t))
        else:
            valid = list(_TOP) + ["geometry"] + list(_SECTIONS)
            raise ConfigError(f"{key}: unknown key; valid keys: {', '.join(valid)}")
    return cfg


def validate(cfg):
    if cfg.experiment not in EXPERIMENTS:
        raise ConfigError(f"experiment: unknown {cfg.experiment!r}; valid: {', '.join(EXPERIMENTS)}")
    allowed = GEOMETRY_DEFAULTS[cfg.experiment]
    for k, v in cfg.geometry.items():
        if k not in allowed:
            raise ConfigError(f"geometry.{k}: unknown key for {cfg.experiment}; valid keys: {', '.join(allowed) or '(none)'}")
        _check_type(f"geometry.{k}", v, float)
    _check_geometry(cfg)
    if cfg.steps < 0:
        raise ConfigError("steps: must be >= 0")
    if cfg.collocation.strategy not in ("grid", "random"):
        raise ConfigError("collocation.strategy: expected 'grid' or 'random'")
    if cfg.bc.style not in ("exact", "weak"):
        raise ConfigError("bc.style: expected 'exact' or 'weak'")
    if cfg.network.layout not in ("vector", "separate"):
        raise ConfigError("network.layout: expected 'vector' or 'separate'")
    if len(cfg.network.widths) < 2 or any(w <= 0 for w in cfg.network.widths):
        raise ConfigError("network.widths: need >= 2 positive widths")
    return cfg


def _check_geometry(cfg):
    from .. import geometry as geo

    build = {"eikonal": geo.spiral, "poisson-sphere": geo.sphere_patch, "stokes-tube": geo.tube}.get(cfg.experiment)
    if build is None:
        return
    try:
        build(**cfg.geometry)
    except ValueError as exc:
        raise ConfigError(f"geometry: {exc}") from None


def config_from_dict(raw, experiment=None):
    """Experiment defaults overlaid with ``raw`` (a parsed config mapping)."""
    raw = raw or {}
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")
    if "manifest_version" in raw:  # a run manifest carries its resolved config
        raw = raw.get("config") or {}
    exp =raw.get("experiment", experiment) or "eikonal"
    if experiment is not None and raw.get("experiment", experiment) != experiment:
        raise ConfigError(f"experiment: config is for {raw['experiment']!r}, but {experiment!r} was requested")
    base = default_config(exp).to_dict()
    merged = _merge(base, copy.deepcopy(raw))
    merged["experiment"] = exp
    return validate(_build(merged))


class _Loader(yaml.SafeLoader):
    """SafeLoader that also reads ``1e-9`` (no decimal point) as a float."""


_Loader.yaml_implicit_resolvers = {k: list(v) for k, v in yaml.SafeLoader.yaml_implicit_resolvers.items()}
_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(r"""^[-+]?(?:[0-9][0-9_]*)(?:\.[0-9_]*)?[eE][-+]?[0-9]+$"""),
    list("-+0123456789"),
)


def load_config(path, experiment=None):
    """Parse a YAML config file; errors carry the line or key path."""
    try:
        with open(path, encoding="utf-8") as fh:
            raw = yaml.load(fh, Loader=_Loader)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"line {mark.line + 1}, column {mark.column + 1}: " if mark else ""
        raise ConfigError(f"{path}: {where}{getattr(exc, 'problem', exc)}") from None
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    return config_from_dict(raw, experiment)
