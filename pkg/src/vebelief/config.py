"""Run configuration documents for the command-line interface."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

from .estimands import CURVE_VE_T
from .estimators import DEFAULT_ESTIMANDS
from .exceptions import ConfigError, ParameterDomainError
from .rng import check_seed
from .scm import Dgm2Params, scm_from_dict

_TOP_KEYS = {
    "scm", "n0", "n1", "replications", "seed", "estimators", "method",
    "adjust_for_s", "bootstrap", "alpha", "exact", "grid", "stacked",
}


@dataclass
class BootstrapSettings:
    n_boot: int = 2000
    alpha: float = 0.05


@dataclass
class GridSettings:
    n_points: int = 101
    ve_t: list = field(default_factory=lambda: list(CURVE_VE_T))
    rr_b_min: float = 1.0
    rr_b_max: float = 2.0


@dataclass
class RunConfig:
    """One run of any subcommand; every default is materialised in ``to_dict``."""

    scm: dict = field(default_factory=lambda: {"dgm2": asdict(Dgm2Params())})
    n0: int = 317
    n1: int = 479
    replications: int = 1
    seed: int | None = None
    estimators: list | None = None
    method: str = "plugin"
    adjust_for_s: object = "auto"
    bootstrap: BootstrapSettings = field(default_factory=BootstrapSettings)
    alpha: float = 0.05
    exact: bool = False
    grid: GridSettings = field(default_factory=GridSettings)
    stacked: bool = True

    def build_scm(self):
        try:
            return scm_from_dict(self.scm)
        except ParameterDomainError as err:
            raise ConfigError(f"key 'scm': {err}") from None
        except (TypeError, ValueError) as err:
            raise ConfigError(f"key 'scm': {err}") from None

    def require_seed(self):
        if self.seed is None:
            raise ConfigError("a seed is required: set 'seed' in the config or pass --seed")
        return self.seed

    def to_dict(self):
        out = asdict(self)
        scm = self.scm
        if "dgm2" in scm:
            out["scm"] = {"dgm2": {**asdict(Dgm2Params()), **(scm["dgm2"] or {})}}
        return out


def _typed(doc, key, kind, default):
    if key not in doc:
        return default
    value = doc[key]
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"key {key!r}: expected an integer, got {value!r}")
    elif kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"key {key!r}: expected a number, got {value!r}")
        value = float(value)
    elif kind is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"key {key!r}: expected true or false, got {value!r}")
    elif kind is list:
        if not isinstance(value, list):
            raise ConfigError(f"key {key!r}: expected a list, got {value!r}")
    return value


def config_from_dict(doc):
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    unknown = sorted(set(doc) - _TOP_KEYS)
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    cfg = RunConfig()
    if "scm" in doc:
        if not isinstance(doc["scm"], dict):
            raise ConfigError("key 'scm': expected an object")
        cfg.scm = doc["scm"]
    cfg.n0 = _typed(doc, "n0", int, cfg.n0)
    cfg.n1 = _typed(doc, "n1", int, cfg.n1)
    for key in ("n0", "n1"):
        if getattr(cfg, key) < 1:
            raise ConfigError(f"key {key!r}: arm size must be >= 1")
    cfg.replications = _typed(doc, "replications", int, cfg.replications)
    if cfg.replications < 1:
        raise ConfigError("key 'replications': must be >= 1")
    if "seed" in doc and doc["seed"] is not None:
        try:
            cfg.seed = check_seed(doc["seed"])
        except (TypeError, ValueError) as err:
            raise ConfigError(f"key 'seed': {err}") from None
    if "estimators" in doc and doc["estimators"] is not None:
        cfg.estimators = _typed(doc, "estimators", list, None)
        if not cfg.estimators:
            raise ConfigError("key 'estimators': list is empty")
    cfg.method = doc.get("method", cfg.method)
    if cfg.method not in ("plugin", "ipw", "or"):
        raise ConfigError(f"key 'method': expected plugin, ipw or or, got {cfg.method!r}")
    cfg.adjust_for_s = doc.get("adjust_for_s", cfg.adjust_for_s)
    if cfg.adjust_for_s not in ("auto", True, False):
        raise ConfigError("key 'adjust_for_s': expected \"auto\", true or false")
    if "bootstrap" in doc:
        boot = doc["bootstrap"]
        if not isinstance(boot, dict) or set(boot) - {"n_boot", "alpha"}:
            raise ConfigError("key 'bootstrap': expected an object with n_boot and/or alpha")
        cfg.bootstrap = BootstrapSettings(
            n_boot=_typed(boot, "n_boot", int, 2000), alpha=_typed(boot, "alpha", float, 0.05)
        )
        if cfg.bootstrap.n_boot < 0:
            raise ConfigError("key 'bootstrap.n_boot': must be >= 0")
    cfg.alpha = _typed(doc, "alpha", float, cfg.alpha)
    if not 0.0 < cfg.alpha < 1.0:
        raise ConfigError("key 'alpha': must lie in (0, 1)")
    cfg.exact = _typed(doc, "exact", bool, cfg.exact)
    cfg.stacked = _typed(doc, "stacked", bool, cfg.stacked)
    if "grid" in doc:
        grid = doc["grid"]
        allowed = {"n_points", "ve_t", "rr_b_min", "rr_b_max"}
        if not isinstance(grid, dict) or set(grid) - allowed:
            raise ConfigError(f"key 'grid': expected an object with keys among {sorted(allowed)}")
        cfg.grid = GridSettings(
            n_points=_typed(grid, "n_points", int, 101),
            ve_t=_typed(grid, "ve_t", list, list(CURVE_VE_T)),
            rr_b_min=_typed(grid, "rr_b_min", float, 1.0),
            rr_b_max=_typed(grid, "rr_b_max", float, 2.0),
        )
        if not 1.0 <= cfg.grid.rr_b_min <= cfg.grid.rr_b_max <= 2.0:
            raise ConfigError("key 'grid': rr_b range must lie within [1, 2]")
        if cfg.grid.n_points < 1:
            raise ConfigError("key 'grid.n_points': must be >= 1")
    return cfg


def load_config(path):
    """Parse a JSON config file; errors carry the line/column or offending key."""
    if path is None:
        return RunConfig()
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err.strerror}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as err:
        raise ConfigError(f"{path}, line {err.lineno}, column {err.colno}: {err.msg}") from None
    return config_from_dict(doc)


def default_estimators(cfg, has_s):
    if cfg.estimators:
        return list(cfg.estimators)
    if has_s:
        return list(DEFAULT_ESTIMANDS)
    return [e for e in DEFAULT_ESTIMANDS if "S=" not in e]
