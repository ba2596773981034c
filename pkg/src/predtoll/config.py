"""Scenario configuration: dataclasses, YAML loading and key=value overrides."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import yaml

from .optimizer import GAParams
from .route_choice import ChoiceCoefficients

__all__ = [
    "ConfigError",
    "CycleConfig",
    "ScenarioConfig",
    "TollSettings",
    "apply_overrides",
    "load_config",
    "parse_clock",
]

SCENARIOS = ("no_toll", "static", "predictive")


class ConfigError(ValueError):
    """Invalid or unreadable configuration."""


@dataclass
class CycleConfig:
    delta: float = 300.0  # estimation / tolling interval, s
    horizon: int = 3  # prediction horizon, intervals
    warmup: float = 600.0
    tolling: float = 2400.0
    post: float = 600.0
    peak: Optional[tuple[float, float]] = None  # sub-window of the tolling period
    drain_limit: float = 7200.0  # max extra world time after the period to empty the network

    def __post_init__(self):
        if self.delta <= 0:
            raise ConfigError("delta must be positive")
        if self.horizon < 2:
            raise ConfigError("horizon must be at least 2 intervals")
        for name in ("warmup", "tolling", "post"):
            v = getattr(self, name)
            if v < 0:
                raise ConfigError(f"{name} window must be non-negative")
            if abs(v / self.delta - round(v / self.delta)) > 1e-9:
                raise ConfigError(f"delta={self.delta:g} does not divide the {name} window ({v:g})")
        if self.period <= 0:
            raise ConfigError("simulation period is empty")
        if self.peak is not None:
            a, b = (float(x) for x in self.peak)
            if not (self.toll_start <= a < b <= self.toll_end):
                raise ConfigError("peak window must lie inside the tolling window")
            self.peak = (a, b)

    @property
    def period(self) -> float:
        return self.warmup + self.tolling + self.post

    @property
    def toll_start(self) -> float:
        return self.warmup

    @property
    def toll_end(self) -> float:
        return self.warmup + self.tolling

    @property
    def n_cycles(self) -> int:
        return int(round(self.period / self.delta))

    def in_tolling(self, t: float) -> bool:
        return self.toll_start <= t < self.toll_end


@dataclass
class TollSettings:
    lower: float = 0.0
    upper: float = 10.0
    delta: float = 2.0  # max change between consecutive intervals
    reduced: bool = True

    def __post_init__(self):
        if self.lower > self.upper:
            raise ConfigError("toll lower bound above upper bound")
        if self.delta < 0:
            raise ConfigError("toll change limit must be non-negative")


@dataclass
class ScenarioConfig:
    network: Path
    demand: Path
    demand_interval: float = 300.0
    historical_times: Optional[Path] = None
    path_sets: Optional[Path] = None
    k_max: int = 3
    cycle: CycleConfig = field(default_factory=CycleConfig)
    tolls: TollSettings = field(default_factory=TollSettings)
    choice: ChoiceCoefficients = field(default_factory=ChoiceCoefficients)
    en_route: bool = True
    informed_fraction: float = 1.0
    ga: GAParams = field(default_factory=GAParams)
    static_ga: GAParams = field(default_factory=GAParams)
    static_level: float = 1.2
    eps_p: float = 0.05
    max_iter: int = 5
    scenarios: tuple[str, ...] = SCENARIOS
    demand_levels: tuple[float, ...] = (1.0,)
    replications: int = 10
    seeds: Optional[tuple[int, ...]] = None
    seed: int = 1
    demand_cov: float = 0.2
    count_noise_sd: float = 0.0
    calibration_window: int = 2  # intervals of observed departures used to rescale predictor demand
    jobs: int = 1

    def __post_init__(self):
        bad = [s for s in self.scenarios if s not in SCENARIOS]
        if bad:
            raise ConfigError(f"unknown scenario(s) {bad}; expected some of {list(SCENARIOS)}")
        if self.replications < 1:
            raise ConfigError("need at least one replication")
        if self.seeds is not None and len(self.seeds) != self.replications:
            raise ConfigError("number of seeds must equal replications")
        if not 0.0 <= self.informed_fraction <= 1.0:
            raise ConfigError("informed_fraction must lie in [0, 1]")
        if any(x < 0 for x in self.demand_levels):
            raise ConfigError("demand levels must be non-negative")
        if self.eps_p <= 0 or self.max_iter < 1:
            raise ConfigError("need eps_p > 0 and max_iter >= 1")
        if self.demand_cov < 0 or self.count_noise_sd < 0:
            raise ConfigError("noise levels must be non-negative")

    @property
    def replication_seeds(self) -> tuple[int, ...]:
        if self.seeds is not None:
            return tuple(self.seeds)
        return tuple(self.seed * 1000 + r for r in range(self.replications))


_NESTED = {
    "cycle": CycleConfig,
    "tolls": TollSettings,
    "choice": ChoiceCoefficients,
    "ga": GAParams,
    "static_ga": GAParams,
}
_PATHS = ("network", "demand", "historical_times", "path_sets")
_TUPLES = ("scenarios", "demand_levels", "seeds")


def parse_clock(text: str) -> float:
    """'HH:MM' or 'HH:MM:SS' or plain seconds -> seconds."""
    text = str(text).strip()
    if ":" not in text:
        return float(text)
    parts = [float(p) for p in text.split(":")]
    if len(parts) == 2:
        parts.append(0.0)
    if len(parts) != 3:
        raise ConfigError(f"bad clock time {text!r}")
    h, m, s = parts
    return h * 3600 + m * 60 + s


def _coerce(value: str) -> Any:
    return yaml.safe_load(value)


def _fields(cls) -> set[str]:
    return {f.name for f in dataclasses.fields(cls)}


def apply_overrides(raw: dict, overrides) -> dict:
    """Apply ``key=value`` strings; keys are dotted (``cycle.delta``) or bare (``delta``).

    A bare key is resolved at top level first, then in the nested sections.
    """
    raw = {k: (dict(v) if isinstance(v, dict) else v) for k, v in raw.items()}
    top = _fields(ScenarioConfig)
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, value = item.split("=", 1)
        key = key.strip()
        val = _coerce(value)
        if "." in key:
            section, sub = key.split(".", 1)
            if section not in _NESTED or sub not in _fields(_NESTED[section]):
                raise ConfigError(f"unknown config key {key!r}")
            raw.setdefault(section, {})
            raw[section] = dict(raw[section] or {})
            raw[section][sub] = val
        elif key in top:
            raw[key] = val
        else:
            hits = [s for s, cls in _NESTED.items() if key in _fields(cls)]
            if not hits:
                raise ConfigError(f"unknown config key {key!r}")
            section = hits[0]
            raw[section] = dict(raw.get(section) or {})
            raw[section][key] = val
    return raw


def build_config(raw: dict, base_dir: Path | str = ".") -> ScenarioConfig:
    base_dir = Path(base_dir)
    raw = dict(raw)
    unknown = set(raw) - _fields(ScenarioConfig)
    if unknown:
        raise ConfigError(f"unknown config key(s): {sorted(unknown)}")
    for key in ("network", "demand"):
        if key not in raw:
            raise ConfigError(f"config is missing {key!r}")
    kw: dict[str, Any] = {}
    try:
        for key, value in raw.items():
            if key in _NESTED:
                section = dict(value or {})
                if key == "cycle" and "peak" in section and section["peak"] is not None:
                    peak = section["peak"]
                    if isinstance(peak, str):
                        peak = peak.split("-")
                    section["peak"] = tuple(parse_clock(p) for p in peak)
                bad = set(section) - _fields(_NESTED[key])
                if bad:
                    raise ConfigError(f"unknown key(s) in {key}: {sorted(bad)}")
                kw[key] = _NESTED[key](**section)
            elif key in _PATHS:
                kw[key] = None if value is None else (base_dir / str(value))
            elif key in _TUPLES:
                kw[key] = None if value is None else tuple(value)
            else:
                kw[key] = value
        return ScenarioConfig(**kw)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: Path | str, overrides=()) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        raw = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"config {path} must be a mapping")
    raw = apply_overrides(raw, overrides)
    cfg = build_config(raw, path.parent)
    for key in _PATHS:
        p = getattr(cfg, key)
        if p is not None and not p.exists():
            raise ConfigError(f"{key} file not found: {p}")
    return cfg
