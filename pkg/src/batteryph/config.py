"""Run configuration: file loading, defaults, overrides and study assembly."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .network import (DeenergizationSchedule, Network, compute_off_sets, load_network,
                      read_demand_csv, read_risk_csv)
from .opf import BatteryConfig, CostConfig

CASES_DIR = Path(__file__).resolve().parent / "cases"


class ConfigError(ValueError):
    pass


@dataclass
class PHSettings:
    rho: float = 0.001
    rho_soc: Optional[float] = None
    max_iters: int = 200
    tol: float = 1e-4
    gap_target: float = 0.005
    breakpoints: int = 8
    refine: int = 0
    refine_ratio: float = 2.0
    placement_tol: float = 1e-3
    soc_tol: float = 1e-4
    incumbent_every: int = 1


@dataclass
class RunConfig:
    network: Path
    demand: Path
    risk: Optional[Path] = None
    threshold: float = 0.5
    hours_per_day: int = 24
    horizon_hours: Optional[int] = None
    period_hours: int = 72
    periods: Optional[int] = None
    battery: BatteryConfig = field(default_factory=BatteryConfig)
    cost: CostConfig = field(default_factory=CostConfig)
    ph: PHSettings = field(default_factory=PHSettings)
    workers: int = 1
    policy: str = "sync"
    ef_hour_cap: int = 2000
    out: Path = Path("out")
    seed: int = 0  # reserved; every code path is deterministic

    def validate(self):
        for label in ("network", "demand"):
            p = getattr(self, label)
            if not Path(p).is_file():
                raise ConfigError(f"{label} file not found: {p}")
        if self.risk is not None and not Path(self.risk).is_file():
            raise ConfigError(f"risk file not found: {self.risk}")
        if self.threshold < 0:
            raise ConfigError("threshold must be >= 0")
        if self.period_hours < 1:
            raise ConfigError("period_hours must be >= 1")
        if self.periods is not None and self.periods < 1:
            raise ConfigError("periods must be >= 1")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.policy not in ("sync", "async-incumbent"):
            raise ConfigError(f"unknown policy {self.policy!r}")
        if self.ph.rho < 0 or self.ph.tol <= 0 or self.ph.max_iters < 0:
            raise ConfigError("PH settings out of range (rho >= 0, tol > 0, max_iters >= 0)")
        if self.horizon_hours is not None and self.horizon_hours < 1:
            raise ConfigError("horizon_hours must be >= 1")
        return self


def _sub_config(cls, values, label):
    if values is None:
        return cls()
    if not isinstance(values, dict):
        raise ConfigError(f"{label}: expected an object")
    names = {f.name for f in dataclasses.fields(cls) if f.init}
    unknown = set(values) - names
    if unknown:
        raise ConfigError(f"{label}: unknown field {sorted(unknown)[0]!r}")
    try:
        return cls(**values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{label}: {exc}") from exc


def load_config(path=None, overrides: Optional[dict] = None) -> RunConfig:
    """Read a JSON config (paths relative to the file) and apply ``overrides``.

    Precedence is override > file > default.  Override keys use the
    top-level names (``threshold``, ``workers``...) or ``ph.<name>`` /
    ``battery.<name>`` / ``cost.<name>`` for nested fields.
    """
    doc = {}
    base = Path.cwd()
    if path is not None:
        path = Path(path)
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror or exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
        if not isinstance(doc, dict):
            raise ConfigError(f"{path}: top level must be an object")
        base = path.resolve().parent
    doc = json.loads(json.dumps(doc))
    for key, val in (overrides or {}).items():
        if val is None:
            continue
        if "." in key:
            head, tail = key.split(".", 1)
            doc.setdefault(head, {})[tail] = val
        else:
            doc[key] = val
    for key in ("network", "demand"):
        if key not in doc:
            raise ConfigError(f"config is missing {key!r}")

    def resolve(p):
        if p is None:
            return None
        p = Path(p)
        return p if p.is_absolute() else base / p

    known = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"unknown config field {sorted(unknown)[0]!r}")
    batt = _sub_config(BatteryConfig, doc.get("battery"), "battery")
    cost = _sub_config(CostConfig, doc.get("cost"), "cost")
    ph = _sub_config(PHSettings, doc.get("ph"), "ph")
    scalars = {k: doc[k] for k in ("threshold", "hours_per_day", "horizon_hours", "period_hours",
                                   "periods", "workers", "policy", "ef_hour_cap", "seed") if k in doc}
    out = doc.get("out", "out")
    cfg = RunConfig(network=resolve(doc["network"]), demand=resolve(doc["demand"]),
                    risk=resolve(doc.get("risk")), battery=batt, cost=cost, ph=ph,
                    out=Path(out), **scalars)
    return cfg


def case_config_path(name: str) -> Path:
    p = CASES_DIR / name / "config.json"
    if not p.is_file():
        raise ConfigError(f"no bundled case named {name!r}")
    return p


def available_cases() -> list:
    return sorted(p.parent.name for p in CASES_DIR.glob("*/config.json"))


@dataclass
class Study:
    """Everything a solve needs, assembled from a RunConfig."""

    config: RunConfig
    network: Network
    demand: np.ndarray
    schedule: DeenergizationSchedule

    @property
    def hours(self) -> int:
        return self.demand.shape[1]


def load_study(cfg: RunConfig) -> Study:
    cfg.validate()
    net = load_network(cfg.network)
    dem = read_demand_csv(cfg.demand).matrix(net)
    horizon = cfg.horizon_hours or dem.shape[1]
    if horizon > dem.shape[1]:
        raise ConfigError(f"horizon of {horizon} h exceeds the {dem.shape[1]} h of demand data")
    dem = dem[:, :horizon]
    if cfg.risk is not None:
        risk = read_risk_csv(cfg.risk)
        risk.check_lines(net)
        sched = compute_off_sets(risk, cfg.threshold, cfg.hours_per_day, horizon=horizon)
    else:
        sched = DeenergizationSchedule.empty(horizon)
    return Study(cfg, net, dem, sched)
