"""Tunable parameters for the whole pipeline, loadable from TOML or JSON."""

from __future__ import annotations

import json
import sys
from dataclasses import asdict, dataclass, field, fields, is_dataclass, replace
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .dmg import FingerModel
from .ects import ControllerGains, EctsParams
from .planner import CostWeights


@dataclass(frozen=True)
class SegmentationConfig:
    resolution: float = 0.013
    connectivity: int = 26


@dataclass(frozen=True)
class DmgConfig:
    delta: float = 0.07
    angle_step: float = 5.0
    finger_length: float = 0.1
    finger_width: float = 0.02
    height_clearance: float = 0.003

    def finger(self) -> FingerModel:
        return FingerModel(self.finger_length, self.finger_width, self.height_clearance, self.angle_step)


@dataclass(frozen=True)
class PlannerConfig:
    w_rotation: float = 0.0005
    w_opening: float = 1.0
    w_pull: float = 10.0
    w_excess_rotation: float = 0.001
    comfort_arc: float = 120.0
    w_rotation_fixed: float = 0.001
    max_aperture: float = 0.1
    rotation_policy: str = "minimal"

    def weights(self) -> CostWeights:
        return CostWeights(self.w_rotation, self.w_opening, self.w_pull, self.w_excess_rotation,
                           self.comfort_arc, self.w_rotation_fixed)


@dataclass(frozen=True)
class ManipulabilityConfig:
    grid_step: float | None = None
    angle_step: float = 30.0
    representatives: int = 3
    closing_dirs: list | None = None


@dataclass(frozen=True)
class EctsConfig:
    alpha: float = 1.0
    beta: int = 1
    k_opening: float = 0.7
    k_linear: float = 0.32
    k_angular: float = 16.0
    dt: float = 0.01
    tolerance_pos: float = 0.001
    tolerance_ang: float = 0.1
    v_max: float = 0.05
    omega_max: float = 0.5
    max_steps: int = 20000
    standoff: float = 0.02
    contact_tol: float = 0.002
    depth: float | None = None

    def params(self) -> EctsParams:
        return EctsParams(self.alpha, self.beta)

    def gains(self) -> ControllerGains:
        names = {f.name for f in fields(ControllerGains)}
        return ControllerGains(**{k: v for k, v in asdict(self).items() if k in names})


@dataclass(frozen=True)
class Config:
    input_scale: float = 1.0
    normal_k: int = 12
    segmentation: SegmentationConfig = field(default_factory=SegmentationConfig)
    dmg: DmgConfig = field(default_factory=DmgConfig)
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    manipulability: ManipulabilityConfig = field(default_factory=ManipulabilityConfig)
    ects: EctsConfig = field(default_factory=EctsConfig)

    def validate(self) -> "Config":
        positive = {
            "input_scale": self.input_scale,
            "segmentation.resolution": self.segmentation.resolution,
            "dmg.delta": self.dmg.delta,
            "planner.max_aperture": self.planner.max_aperture,
            "manipulability.angle_step": self.manipulability.angle_step,
        }
        for name, v in positive.items():
            if not v > 0:
                raise ValueError(f"{name} must be positive")
        if self.segmentation.connectivity not in (6, 18, 26):
            raise ValueError("segmentation.connectivity must be 6, 18 or 26")
        if self.planner.rotation_policy not in ("minimal", "goal_seeking"):
            raise ValueError("planner.rotation_policy must be minimal or goal_seeking")
        if self.manipulability.grid_step is not None and self.manipulability.grid_step <= 0:
            raise ValueError("manipulability.grid_step must be positive")
        # the domain objects carry the remaining checks
        self.dmg.finger()
        self.planner.weights()
        self.ects.params()
        self.ects.gains()
        return self

    def to_dict(self) -> dict:
        return asdict(self)


def _build(cls, data: dict, where: str):
    known = {f.name: f for f in fields(cls)}
    unknown = set(data) - set(known)
    if unknown:
        raise ValueError(f"unknown config keys in {where or 'root'}: {sorted(unknown)}")
    kwargs = {}
    for name, value in data.items():
        default = getattr(cls(), name)
        if is_dataclass(default):
            if not isinstance(value, dict):
                raise ValueError(f"{where}{name} must be a table")
            kwargs[name] = _build(type(default), value, f"{where}{name}.")
        else:
            kwargs[name] = value
    return cls(**kwargs)


def config_from_dict(data: dict) -> Config:
    return _build(Config, data, "").validate()


def load_config(path) -> Config:
    path = Path(path)
    text = path.read_text()
    if path.suffix.lower() == ".toml":
        data = tomllib.loads(text)
    else:
        data = json.loads(text)
    return config_from_dict(data)


def _coerce(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def override(cfg: Config, assignments) -> Config:
    """Apply ``section.key=value`` strings; values are parsed as JSON when possible."""
    for item in assignments:
        key, sep, raw = item.partition("=")
        if not sep:
            raise ValueError(f"override {item!r} is not of the form key=value")
        path = key.strip().split(".")
        cfg = _set(cfg, path, _coerce(raw.strip()))
    return cfg.validate()


def _set(obj, path, value):
    name = path[0]
    if not hasattr(obj, name) or name not in {f.name for f in fields(obj)}:
        raise ValueError(f"unknown config key {name!r}")
    if len(path) == 1:
        return replace(obj, **{name: value})
    return replace(obj, **{name: _set(getattr(obj, name), path[1:], value)})
