"""Experiment configuration: dataclasses, TOML loading, validation.

The configuration tree mirrors the TOML sections of the shipped
``configs/paper.toml``; every field has a default reproducing the paper
scenario, so an empty file (or no file) yields the reference experiment.
Unknown keys are rejected to catch typos.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from ..lti import CostFunctional
from ..pilot import ExcitationConfig
from ..quadcopter import QuadParams, paper_params

__all__ = [
    "ConfigError",
    "CostConfig",
    "ObserverConfig",
    "SimConfig",
    "ExperimentConfig",
    "default_config",
    "load_config",
]

OBSERVER_MODES = ("rhso", "hso")
LAYOUTS = ("full", "sparse")
INIT_MODES = ("uniform", "truncated_normal")
PLANTS = ("linear", "nonlinear")
INITIAL_STATE_MODES = ("random_hover", "explicit")


class ConfigError(Exception):
    """Invalid or malformed experiment configuration."""


@dataclass(frozen=True)
class CostConfig:
    """Diagonal cost specification; masks follow the nonzero pattern."""

    q_diag: tuple = (9.57, 6.91, 2.84, 0, 0, 0, 0, 0, 11.68, 0, 0, 0)
    r_diag: tuple = (9.57, 3.48, 14.40, 0.17)

    def __post_init__(self):
        object.__setattr__(self, "q_diag", tuple(float(v) for v in self.q_diag))
        object.__setattr__(self, "r_diag", tuple(float(v) for v in self.r_diag))
        if len(self.q_diag) != 12 or len(self.r_diag) != 4:
            raise ConfigError("q_diag must have 12 entries and r_diag 4")

    def to_cost(self) -> CostFunctional:
        return CostFunctional(q_matrix=np.diag(self.q_diag),
                              r_matrix=np.diag(self.r_diag))


@dataclass(frozen=True)
class ObserverConfig:
    epsilon: float = 0.002
    stack_capacity: int = 100
    sample_interval: float = 0.08
    init_mode: str = "uniform"
    init_range: tuple = (-5.0, 5.0)
    layout: str = "sparse"
    mode: str = "rhso"

    def __post_init__(self):
        object.__setattr__(self, "init_range",
                           tuple(float(v) for v in self.init_range))
        if self.mode not in OBSERVER_MODES:
            raise ConfigError(f"observer.mode must be one of {OBSERVER_MODES}")
        if self.layout not in LAYOUTS:
            raise ConfigError(f"observer.layout must be one of {LAYOUTS}")
        if self.init_mode not in INIT_MODES:
            raise ConfigError(f"observer.init_mode must be one of {INIT_MODES}")
        if self.epsilon < 0:
            raise ConfigError("observer.epsilon must be nonnegative")
        if self.stack_capacity < 1:
            raise ConfigError("observer.stack_capacity must be >= 1")
        if self.sample_interval <= 0:
            raise ConfigError("observer.sample_interval must be positive")
        if len(self.init_range) != 2 or not self.init_range[0] < self.init_range[1]:
            raise ConfigError("observer.init_range must be (lo, hi), lo < hi")


@dataclass(frozen=True)
class SimConfig:
    dt: float = 0.004
    horizon: float = 200.0
    initial_state_mode: str = "random_hover"
    hover_box: tuple = (-1.5, 1.5)
    z_offset: float = 1.5
    plant: str = "linear"
    initial_state: tuple = None

    def __post_init__(self):
        object.__setattr__(self, "hover_box",
                           tuple(float(v) for v in self.hover_box))
        if self.plant not in PLANTS:
            raise ConfigError(f"sim.plant must be one of {PLANTS}")
        if self.initial_state_mode not in INITIAL_STATE_MODES:
            raise ConfigError(
                f"sim.initial_state_mode must be one of {INITIAL_STATE_MODES}")
        if self.dt <= 0 or self.horizon <= 0:
            raise ConfigError("sim.dt and sim.horizon must be positive")
        if len(self.hover_box) != 2 or not self.hover_box[0] <= self.hover_box[1]:
            raise ConfigError("sim.hover_box must be (lo, hi) with lo <= hi")
        if self.initial_state_mode == "explicit":
            if self.initial_state is None or len(self.initial_state) != 12:
                raise ConfigError(
                    "sim.initial_state must hold 12 entries in explicit mode")
            object.__setattr__(self, "initial_state",
                               tuple(float(v) for v in self.initial_state))


@dataclass(frozen=True)
class ExperimentConfig:
    quad: QuadParams = field(default_factory=paper_params)
    cost: CostConfig = field(default_factory=CostConfig)
    excitation: ExcitationConfig = field(default_factory=ExcitationConfig)
    observer: ObserverConfig = field(default_factory=ObserverConfig)
    sim: SimConfig = field(default_factory=SimConfig)
    trials: int = 13
    master_seed: int = 1

    def __post_init__(self):
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        ratio = self.observer.sample_interval / self.sim.dt
        if abs(ratio - round(ratio)) > 1e-9:
            raise ConfigError(
                "observer.sample_interval must be an integer multiple of sim.dt")

    @property
    def steps_per_sample(self) -> int:
        return int(round(self.observer.sample_interval / self.sim.dt))


def default_config() -> ExperimentConfig:
    """The paper scenario with all defaults."""
    return ExperimentConfig()


_SECTIONS = {
    "quad": QuadParams,
    "cost": CostConfig,
    "excitation": ExcitationConfig,
    "observer": ObserverConfig,
    "sim": SimConfig,
}


def _build_section(cls, data: dict, section: str):
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown keys in [{section}]: {sorted(unknown)}")
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid [{section}] section: {exc}") from exc


def load_config(path) -> ExperimentConfig:
    """Parse a TOML experiment file; missing keys fall back to defaults."""
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed TOML: {exc}") from exc

    top_known = set(_SECTIONS) | {"trials", "master_seed"}
    unknown = set(raw) - top_known
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")

    kwargs = {}
    for name, cls in _SECTIONS.items():
        section = raw.get(name, {})
        if not isinstance(section, dict):
            raise ConfigError(f"[{name}] must be a table")
        kwargs[name] = _build_section(cls, section, name)
    for scalar in ("trials", "master_seed"):
        if scalar in raw:
            try:
                kwargs[scalar] = int(raw[scalar])
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"{scalar} must be an integer") from exc
    try:
        return ExperimentConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
