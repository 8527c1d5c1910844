"""Versioned YAML experiment configs.

Unknown keys and ill-typed values are rejected with the offending line number.
A file only needs ``version`` and ``experiment``; everything else falls back
to the experiment's defaults.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .engine import EngineParams, Schedule
from .geometry import NetworkConfig

SCHEMA_VERSION = 1

EXPERIMENTS = (
    "paper_instance",
    "error_curve",
    "convergence_prob",
    "spectral_cdf",
    "iterations_vs_size",
    "mse_vs_threshold",
    "damping_sweep",
)

NETWORK_KEYS = tuple(f.name for f in dataclasses.fields(NetworkConfig) if f.name != "seed")
ENGINE_KEYS = tuple(f.name for f in dataclasses.fields(EngineParams))
LIST_KEYS = {"methods": str, "sizes": int, "thresholds_m": float, "cluster_areas_km2": float, "etas": float}
SCALAR_KEYS = {"trials": int, "root_seed": int, "output": str, "mc_samples": int}
TOP_KEYS = ("version", "experiment", "network", "engine", *SCALAR_KEYS, *LIST_KEYS)


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line else message)


@dataclass(frozen=True)
class Method:
    label: str
    schedule: Schedule | None
    damping: float = 1.0

    @property
    def is_cg(self) -> bool:
        return self.schedule is None

    @property
    def tag(self) -> str:
        return "".join(ch if ch.isalnum() else "_" for ch in self.label).strip("_")


def parse_method(text: str, seed: int = 0) -> Method:
    """``gmp``, ``rgmp``, ``brgmp:M``, ``damped:eta``, ``fixed:1,2,4,3`` (1-based) or ``cg``."""
    name, _, arg = text.partition(":")
    try:
        if name == "gmp" and not arg:
            return Method(text, Schedule.synchronous())
        if name == "rgmp" and not arg:
            return Method(text, Schedule.randomized(seed))
        if name == "brgmp":
            return Method(text, Schedule.blockwise(int(arg), seed))
        if name == "damped":
            eta = float(arg)
            if not 0 < eta <= 1:
                raise ValueError("damping factor must lie in (0, 1]")
            return Method(text, Schedule.synchronous(), eta)
        if name == "fixed":
            order = [int(k) - 1 for k in arg.split(",")]
            return Method(text, Schedule.fixed(order))
        if name == "cg" and not arg:
            return Method(text, None)
    except ValueError as err:
        raise ValueError(f"bad method {text!r}: {err}") from None
    raise ValueError(f"unknown method {text!r}")


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    network: NetworkConfig = field(default_factory=NetworkConfig)
    engine: EngineParams = field(default_factory=EngineParams)
    methods: tuple[str, ...] = ("gmp", "rgmp")
    trials: int = 1
    root_seed: int = 0
    output: str = "results"
    sizes: tuple[int, ...] = ()
    thresholds_m: tuple[float, ...] = ()
    cluster_areas_km2: tuple[float, ...] = ()
    etas: tuple[float, ...] = ()
    mc_samples: int = 0
    version: int = SCHEMA_VERSION

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.experiment!r}; choose from {', '.join(EXPERIMENTS)}")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not 0 <= self.root_seed < 2**64:
            raise ValueError("root_seed must be a 64-bit unsigned integer")
        for m in self.methods:
            parse_method(m)
        if self.experiment in ("convergence_prob", "iterations_vs_size") and not self.sizes:
            raise ValueError(f"{self.experiment} needs sizes")
        if self.experiment == "mse_vs_threshold" and not (self.thresholds_m and self.cluster_areas_km2):
            raise ValueError("mse_vs_threshold needs thresholds_m and cluster_areas_km2")
        if self.experiment == "damping_sweep" and not self.etas:
            raise ValueError("damping_sweep needs etas")
        if any(not 0 < e <= 1 for e in self.etas):
            raise ValueError("etas must lie in (0, 1]")

    def method_objects(self, seed: int = 0) -> list[Method]:
        return [parse_method(m, seed) for m in self.methods]

    def to_dict(self) -> dict:
        net = {k: getattr(self.network, k) for k in NETWORK_KEYS}
        eng = {k: getattr(self.engine, k) for k in ENGINE_KEYS}
        out = {"version": self.version, "experiment": self.experiment, "network": net, "engine": eng}
        for key in SCALAR_KEYS:
            out[key] = getattr(self, key)
        for key in LIST_KEYS:
            out[key] = list(getattr(self, key))
        return out

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)


def _radius_for(n_rrh: int, density: float = 10.0) -> float:
    return math.sqrt(n_rrh / (density * math.pi))


def default_config(experiment: str) -> ExperimentConfig:
    """Desk-scale defaults: beta_N=10/km^2, beta_K=8/km^2, alpha=3.7, 95 dB, d0=1000 m."""
    net = NetworkConfig()
    if experiment == "paper_instance":
        return ExperimentConfig(
            experiment,
            network=dataclasses.replace(net, snr_db=100.0, distance_threshold_m=math.inf),
            methods=("gmp", "fixed:1,2,4,3", "fixed:1,2,3,4", "rgmp"),
        )
    if experiment == "error_curve":
        return ExperimentConfig(
            experiment,
            network=dataclasses.replace(net, area_radius_km=_radius_for(40)),
            engine=EngineParams(max_iterations=200, tolerance=1e-10),
            methods=("rgmp", "brgmp:2", "brgmp:10", "damped:0.5", "damped:0.9", "cg"),
        )
    if experiment == "convergence_prob":
        return ExperimentConfig(experiment, network=net, methods=("gmp", "rgmp"), trials=200, sizes=(10, 20, 40))
    if experiment == "spectral_cdf":
        return ExperimentConfig(
            experiment,
            network=dataclasses.replace(net, area_radius_km=_radius_for(20), n_rrh=20, n_users=15),
            methods=(),
            trials=200,
            etas=(0.5, 0.9),
            mc_samples=0,
        )
    if experiment == "iterations_vs_size":
        return ExperimentConfig(
            experiment, network=net, methods=("rgmp", "brgmp:2", "damped:0.5"), trials=50, sizes=(20, 40, 80)
        )
    if experiment == "mse_vs_threshold":
        return ExperimentConfig(
            experiment,
            network=dataclasses.replace(net, area_radius_km=math.sqrt(20.0 / math.pi)),
            # a loose stop leaves weak users under-resolved and inflates the MSE
            engine=EngineParams(tolerance=1e-10),
            methods=("rgmp",),
            trials=20,
            thresholds_m=(1000.0, 2000.0, 3000.0, 4000.0),
            cluster_areas_km2=(9.0, 25.0, 49.0),
        )
    if experiment == "damping_sweep":
        return ExperimentConfig(
            experiment,
            network=dataclasses.replace(net, area_radius_km=_radius_for(20), n_rrh=20, n_users=15),
            engine=EngineParams(max_iterations=5000),
            methods=(),
            trials=50,
            etas=(0.3, 0.6, 0.9),
        )
    raise ValueError(f"unknown experiment {experiment!r}")


# -- parsing ---------------------------------------------------------------------

def _key_lines(node, prefix="") -> dict[str, int]:
    lines: dict[str, int] = {}
    if isinstance(node, yaml.MappingNode):
        for key_node, value_node in node.value:
            path = f"{prefix}{key_node.value}"
            lines[path] = key_node.start_mark.line + 1
            lines.update(_key_lines(value_node, path + "."))
    return lines


def _coerce(value, kind, where: str, line: int | None):
    if kind is float:
        if isinstance(value, str) and value.strip().lower() in ("inf", "+inf", "infinity"):
            return math.inf
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where} must be a number, got {value!r}", line)
        return float(value)
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where} must be an integer, got {value!r}", line)
        return value
    if kind is str:
        if not isinstance(value, str):
            raise ConfigError(f"{where} must be a string, got {value!r}", line)
        return value
    raise AssertionError(kind)


def _field_kind(cls, name):
    hint = {f.name: f.type for f in dataclasses.fields(cls)}[name]
    if "int" in hint and "float" not in hint:
        return int
    if "str" in hint:
        return str
    return float


def _section(data, cls, allowed, name, lines):
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"{name} must be a mapping", lines.get(name))
    out = {}
    for key, value in data.items():
        path = f"{name}.{key}"
        if key not in allowed:
            raise ConfigError(f"unknown key {path!r}", lines.get(path))
        if value is None and key in ("n_rrh", "n_users"):
            out[key] = None
            continue
        out[key] = _coerce(value, _field_kind(cls, key), path, lines.get(path))
    return out


def parse_config(text: str) -> ExperimentConfig:
    try:
        root = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.YAMLError as err:
        mark = getattr(err, "problem_mark", None)
        raise ConfigError(f"invalid YAML: {getattr(err, 'problem', err)}", mark.line + 1 if mark else None)
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping", 1)
    lines = _key_lines(root)
    for key in data:
        if key not in TOP_KEYS:
            raise ConfigError(f"unknown key {key!r}", lines.get(key))
    if data.get("version") != SCHEMA_VERSION:
        raise ConfigError(f"version must be {SCHEMA_VERSION}", lines.get("version", 1))
    experiment = data.get("experiment")
    if experiment not in EXPERIMENTS:
        raise ConfigError(f"experiment must be one of {', '.join(EXPERIMENTS)}", lines.get("experiment", 1))
    base = default_config(experiment)

    updates: dict = {}
    try:
        net = _section(data.get("network"), NetworkConfig, NETWORK_KEYS, "network", lines)
        updates["network"] = dataclasses.replace(base.network, **net)
    except (TypeError, ValueError) as err:
        if isinstance(err, ConfigError):
            raise
        raise ConfigError(str(err), lines.get("network"))
    try:
        eng = _section(data.get("engine"), EngineParams, ENGINE_KEYS, "engine", lines)
        updates["engine"] = dataclasses.replace(base.engine, **eng)
    except (TypeError, ValueError) as err:
        if isinstance(err, ConfigError):
            raise
        raise ConfigError(str(err), lines.get("engine"))
    for key, kind in SCALAR_KEYS.items():
        if key in data:
            updates[key] = _coerce(data[key], kind, key, lines.get(key))
    for key, kind in LIST_KEYS.items():
        if key in data:
            value = data[key] if data[key] is not None else []
            if not isinstance(value, list):
                raise ConfigError(f"{key} must be a list", lines.get(key))
            updates[key] = tuple(_coerce(v, kind, key, lines.get(key)) for v in value)
    for text in updates.get("methods", ()):
        try:
            parse_method(text)
        except ValueError as err:
            raise ConfigError(str(err), lines.get("methods"))
    try:
        return dataclasses.replace(base, **updates)
    except ValueError as err:
        first = next((k for k in updates if k in str(err)), None)
        raise ConfigError(str(err), lines.get(first) if first else None)


def load_config(path) -> ExperimentConfig:
    return parse_config(Path(path).read_text())
