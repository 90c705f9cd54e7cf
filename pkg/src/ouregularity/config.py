"""Experiment configuration: one dataclass per suite, strict JSON loading.

Unknown keys anywhere are rejected, and ``effective_dict`` writes every
default back out so a run directory records exactly what was executed.
"""
from __future__ import annotations

import dataclasses
import json
import typing
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Union

SUITES = ("theta", "smoothing", "schauder", "zygmund", "interpolation", "sde", "solve",
          "residual")


class ConfigError(ValueError):
    pass


@dataclass
class ProbeConfig:
    points: int = 16
    directions: int = 16
    magnitudes: int = 12
    delta_min: float = 1e-4
    delta_max: float = 1e-1
    radius: float = 2.0
    extra_points: list = field(default_factory=list)


@dataclass
class BudgetConfig:
    samples: int = 2**16
    max_samples: int = 2**20
    scale_with_lambda: bool = True
    quad_tol: float = 1e-9
    grading_levels: int = 24
    panel_order: int = 8


@dataclass
class ThetaParams:
    gap_min: float = 1e-4
    gap_max: float = 1e-1
    count: int = 12
    anchor: Optional[float] = None
    tolerance: float = 0.05
    optimality: bool = True


@dataclass
class SmoothingParams:
    phi: list = field(default_factory=lambda: [{"name": "step"}])
    n_max: int = 3
    gap_min: float = 1e-3
    gap_max: float = 1e-1
    count: int = 8
    anchor: Optional[float] = None
    samples: int = 2**15
    align: bool = True


@dataclass
class SchauderParams:
    alpha: float = 0.4
    t: float = 1.0
    s_grid: list = field(default_factory=lambda: [0.0, 0.5])
    phi: Any = field(default_factory=lambda: {"name": "const", "params": {"value": 0.0}})
    psi: Any = field(default_factory=lambda: {"name": "holderCusp", "params": {"alpha": 0.4}})
    theta: Optional[float] = None
    tol: float = 1e-5
    sharpness_offset: float = 0.2
    probes: ProbeConfig = field(default_factory=ProbeConfig)


@dataclass
class ZygmundParams:
    alpha: float = 0.0
    t: float = 1.0
    s_grid: list = field(default_factory=lambda: [0.0, 0.5])
    phi: Any = field(default_factory=lambda: {"name": "const", "params": {"value": 0.0}})
    psi: Any = field(default_factory=lambda: {"name": "holderCusp", "params": {"alpha": 0.999}})
    theta: Optional[float] = None
    tol: float = 1e-5
    axes: Optional[list] = None
    probes: ProbeConfig = field(default_factory=ProbeConfig)


@dataclass
class InterpolationParams:
    family: list = field(default_factory=lambda: [
        {"name": "sine", "params": {"c": [float(k)]}} for k in (1, 2, 4, 8, 16)])
    alpha1: float = 0.0
    alpha: float = 0.5
    alpha2: float = 1.0
    probes: ProbeConfig = field(default_factory=ProbeConfig)


@dataclass
class SdeParams:
    x: list = field(default_factory=lambda: [1.0])
    s: float = 0.0
    t: float = 1.0
    dt: float = 1e-3
    path_count: int = 10**5
    phi: list = field(default_factory=lambda: ["const", "linear", "quadratic", "cosine"])


@dataclass
class SolveParams:
    t: float = 1.0
    s_grid: list = field(default_factory=lambda: [0.0, 0.25, 0.5, 0.75, 1.0])
    x_set: list = field(default_factory=lambda: [[-1.0], [0.0], [1.0]])
    phi: Any = "quadratic"
    psi: Any = "zero"


@dataclass
class ResidualParams:
    t: float = 1.0
    s_probe: list = field(default_factory=lambda: [0.25, 0.5, 0.75])
    x_probe: list = field(default_factory=lambda: [[-1.0], [0.0], [0.5], [1.0]])
    phi: Any = "quadratic"
    psi: Any = "zero"
    tolerance: float = 1e-3


def default_budget(suite: str) -> BudgetConfig:
    """Field-probing suites default to a looser inner quadrature tolerance."""
    if suite in ("schauder", "zygmund"):
        return BudgetConfig(quad_tol=1e-6, grading_levels=12, panel_order=6)
    return BudgetConfig()


PARAMS = {"theta": ThetaParams, "smoothing": SmoothingParams, "schauder": SchauderParams,
          "zygmund": ZygmundParams, "interpolation": InterpolationParams, "sde": SdeParams,
          "solve": SolveParams, "residual": ResidualParams}


@dataclass
class ExperimentConfig:
    model: dict
    suite: str
    params: Any = None
    budget: Optional[BudgetConfig] = None
    method: str = "auto"
    seed: int = 0
    workers: int = 1
    out: str = "runs/out"

    def __post_init__(self):
        if self.suite not in SUITES:
            raise ConfigError(f"suite must be one of {', '.join(SUITES)}; got {self.suite!r}")
        if self.params is None:
            self.params = PARAMS[self.suite]()
        if self.budget is None:
            self.budget = default_budget(self.suite)
        if self.method not in ("auto", "tensorQuadrature", "monteCarlo"):
            raise ConfigError(f"unknown method {self.method!r}")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")


# ---------------------------------------------------------------------------
# strict loading


def _build(cls, data, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(unknown)}")
    kwargs = {}
    for f in dataclasses.fields(cls):
        if f.name not in data:
            if f.default is dataclasses.MISSING and f.default_factory is dataclasses.MISSING:
                raise ConfigError(f"{where}: missing required key {f.name!r}")
            continue
        kwargs[f.name] = _coerce(hints[f.name], data[f.name], f"{where}.{f.name}")
    return cls(**kwargs)


def _coerce(tp, value, where: str):
    origin = typing.get_origin(tp)
    if dataclasses.is_dataclass(tp):
        return _build(tp, value, where)
    if origin is Union:
        args = [a for a in typing.get_args(tp) if a is not type(None)]
        if value is None:
            return None
        return _coerce(args[0], value, where)
    if tp is Any:
        return value
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected true/false")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}: expected an integer")
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected a string")
        return value
    if tp in (list, dict) or origin in (list, dict):
        base = origin or tp
        if not isinstance(value, base):
            raise ConfigError(f"{where}: expected a {base.__name__}")
        return value
    return value


def _check_model(desc, where="model"):
    if not isinstance(desc, dict):
        raise ConfigError(f"{where}: expected an object")
    allowed = {"builtin", "type", "N", "T", "params", "tables", "name"}
    unknown = sorted(set(desc) - allowed)
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(unknown)}")
    if "builtin" not in desc:
        if "type" not in desc:
            raise ConfigError(f"{where}: needs 'builtin' or 'type'")
        if "N" not in desc:
            raise ConfigError(f"{where}: missing required key 'N'")
        if isinstance(desc["N"], bool) or not isinstance(desc["N"], int) or desc["N"] < 1:
            raise ConfigError(f"{where}.N: expected a positive integer")


def config_from_dict(data: dict) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    suite = data.get("suite")
    if suite not in SUITES:
        raise ConfigError(f"suite must be one of {', '.join(SUITES)}; got {suite!r}")
    if "model" not in data:
        raise ConfigError("missing required key 'model'")
    _check_model(data["model"])
    data = dict(data)
    params = data.pop("params", {})
    budget = data.pop("budget", {})
    cfg = _build(ExperimentConfig, data, "config")
    cfg.params = _build(PARAMS[suite], params, "params")
    given = _build(BudgetConfig, budget, "budget")
    cfg.budget = dataclasses.replace(default_budget(suite),
                                     **{k: getattr(given, k) for k in budget})
    return cfg


def load_config(path) -> ExperimentConfig:
    try:
        data = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"no such config file: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}")
    return config_from_dict(data)


def effective_dict(cfg: ExperimentConfig) -> dict:
    return dataclasses.asdict(cfg)
