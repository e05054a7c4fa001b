"""
YAML experiment configuration with strict keys and a stable fingerprint.

Every block has defaults, so an empty file is a valid configuration.  Keys
that are not part of the schema are rejected to catch typos early.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import yaml

__all__ = ["GridConfig", "CoefficientConfig", "ProbeConfig", "SolverConfig", "RecoveryConfig",
           "OutputConfig", "ExperimentConfig", "ConfigError", "load_config"]


class ConfigError(ValueError):
    pass


@dataclass
class GridConfig:
    nodes: int = 24
    nt: int = 64
    T: float = 1.0
    levels: list = field(default_factory=lambda: [8, 16, 32])


@dataclass
class CoefficientConfig:
    scenario: str = "gauge"             # gauge | rotational | identical | generic | born
    seed: int = 1
    seed2: int = 2
    amplitude: float = 0.3
    complex_values: bool = False
    time_dependent: bool = True
    gauge_seed: int = 3
    gauge_amplitude: float = 0.1
    difference_amplitude: float = 0.05   # size of the second-pair perturbation (born / rotational)

    SCENARIOS = ("gauge", "rotational", "identical", "generic", "born")


@dataclass
class ProbeConfig:
    kmax: float = 4.0
    spacing: float = 3.141592653589793
    half: bool = True
    xis: list | None = None              # explicit xi list overrides the lattice
    h_sweep: list = field(default_factory=lambda: [0.4, 0.3, 0.2, 0.15, 0.1])
    h_fractions: list = field(default_factory=lambda: [0.8, 0.55, 0.35])
    h_cap: float = 0.3
    t0: float = 0.15
    width: float = 0.1
    n_probes: int = 5
    n_lattice: int = 100


@dataclass
class SolverConfig:
    tol: float = 1e-10
    transport_tol: float = 1e-6
    frame_tol: float = 1e-12
    gamma0_tol: float = 1e-12
    min_order: float = 1.5
    min_slope: float = 0.25
    identity_gap: float = 0.05


@dataclass
class RecoveryConfig:
    curl_tol: float = 1e-2
    density_tol: float = 1e-2
    path_tol: float = 1e-3
    distinct_factor: float = 10.0
    max_frequencies: int = 6
    budget_seconds: float = 3600.0
    taper: float = 0.25
    fit_threshold: float = 0.1


@dataclass
class OutputConfig:
    formats: list = field(default_factory=lambda: ["csv", "npz", "json"])


_BLOCKS = {"grid": GridConfig, "coefficients": CoefficientConfig, "probes": ProbeConfig,
           "solver": SolverConfig, "recovery": RecoveryConfig, "output": OutputConfig}


@dataclass
class ExperimentConfig:
    grid: GridConfig = field(default_factory=GridConfig)
    coefficients: CoefficientConfig = field(default_factory=CoefficientConfig)
    probes: ProbeConfig = field(default_factory=ProbeConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    recovery: RecoveryConfig = field(default_factory=RecoveryConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    workers: int = 1
    mode: str = "oracle"

    def __post_init__(self):
        self.validate()

    def validate(self):
        for name in ("tol", "transport_tol", "frame_tol", "gamma0_tol", "identity_gap"):
            if getattr(self.solver, name) <= 0:
                raise ConfigError(f"solver.{name} must be positive")
        for name in ("curl_tol", "density_tol", "path_tol", "budget_seconds"):
            if getattr(self.recovery, name) <= 0:
                raise ConfigError(f"recovery.{name} must be positive")
        if self.coefficients.scenario not in CoefficientConfig.SCENARIOS:
            raise ConfigError(f"unknown scenario {self.coefficients.scenario!r}; "
                              f"expected one of {CoefficientConfig.SCENARIOS}")
        if self.mode not in ("oracle", "born"):
            raise ConfigError(f"mode must be 'oracle' or 'born', got {self.mode!r}")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        if self.grid.nodes < 4 or self.grid.nt < 1 or self.grid.T <= 0:
            raise ConfigError("grid needs nodes >= 4, nt >= 1 and T > 0")
        if not 0 <= self.recovery.taper < 1:
            raise ConfigError("recovery.taper must lie in [0, 1)")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def fingerprint(self) -> str:
        """SHA-256 over the canonical JSON form (sorted keys, defaults filled in)."""
        text = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    @classmethod
    def from_dict(cls, data: dict | None) -> "ExperimentConfig":
        data = {} if data is None else dict(data)
        if not isinstance(data, dict):
            raise ConfigError("configuration root must be a mapping")
        top = set(_BLOCKS) | {"workers", "mode"}
        unknown = sorted(set(data) - top)
        if unknown:
            raise ConfigError(f"unknown configuration keys: {unknown}")
        kwargs = {}
        for name, block in _BLOCKS.items():
            sub = data.get(name) or {}
            if not isinstance(sub, dict):
                raise ConfigError(f"block {name!r} must be a mapping")
            allowed = {f.name for f in dataclasses.fields(block)}
            bad = sorted(set(sub) - allowed)
            if bad:
                raise ConfigError(f"unknown keys in {name!r}: {bad}")
            kwargs[name] = block(**sub)
        for key in ("workers", "mode"):
            if key in data:
                kwargs[key] = data[key]
        return cls(**kwargs)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    return ExperimentConfig.from_dict(data)
