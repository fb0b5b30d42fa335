"""Scenario configuration: JSON in, validated dataclasses out."""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .allocation import AllocationWeights
from .control import ControllerGains
from .gait import GaitParams
from .interference import DownwashModel
from .model import ModelError, RobotModel, load_robot

SCENARIO_DIR = Path(__file__).parent / "scenarios"


class ConfigError(ValueError):
    """Bad configuration; ``field`` is the dotted path of the offending entry."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass(frozen=True)
class InterferenceConfig:
    enabled: bool = True
    clearance_radius: float = 0.144
    influence_length: float = 1.0
    include_links: bool = False
    alpha_threshold: float = math.radians(30.0)
    theta_threshold: float = 0.7

    def __post_init__(self):
        if not 0 < self.alpha_threshold <= math.pi / 2:
            raise ValueError("alpha_threshold must be in (0, pi/2]")
        if not self.theta_threshold > 0:
            raise ValueError("theta_threshold must be positive")

    def downwash(self) -> DownwashModel:
        return DownwashModel(
            clearance_radius=self.clearance_radius,
            influence_length=self.influence_length,
            include_links=self.include_links,
        )


@dataclass(frozen=True)
class FormSegment:
    form: int
    hold: float

    def __post_init__(self):
        if self.form not in (1, 2, 3):
            raise ValueError(f"form must be 1, 2 or 3, got {self.form}")
        if not self.hold > 0:
            raise ValueError("hold must be positive")


@dataclass(frozen=True)
class FlightScenario:
    altitude: float = 1.0
    segments: tuple[FormSegment, ...] = (FormSegment(1, 3.0), FormSegment(2, 7.0), FormSegment(3, 8.0))
    # interference constraints dropped for t in [start, end)
    toggle_off: tuple[float, float] | None = None

    def __post_init__(self):
        if not self.segments:
            raise ValueError("at least one form segment is required")
        if self.toggle_off is not None:
            a, b = self.toggle_off
            if not 0 <= a < b:
                raise ValueError("toggle_off must be an increasing pair of times")

    @property
    def duration(self) -> float:
        return float(sum(s.hold for s in self.segments))

    def form_at(self, t: float) -> int:
        acc = 0.0
        for s in self.segments:
            acc += s.hold
            if t < acc - 1e-9:
                return s.form
        return self.segments[-1].form


@dataclass(frozen=True)
class SimConfig:
    dt: float = 0.025
    duration: float | None = None
    disturbance: float = 0.0
    disturbance_torque: float = 0.0
    servo_time_constant: float = 0.1
    log_timing: bool = False

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.duration is not None and not self.duration >= self.dt:
            raise ValueError("duration must be at least dt")
        if self.disturbance < 0 or self.disturbance_torque < 0:
            raise ValueError("disturbance must be non-negative")
        if not self.servo_time_constant > 0:
            raise ValueError("servo_time_constant must be positive")


@dataclass(frozen=True)
class ScenarioConfig:
    mode: str = "flight"
    robot: RobotModel = field(default_factory=RobotModel)
    robot_file: str | None = None
    gains: ControllerGains = field(default_factory=ControllerGains)
    weights: AllocationWeights = field(default_factory=AllocationWeights)
    interference: InterferenceConfig = field(default_factory=InterferenceConfig)
    gait: GaitParams = field(default_factory=GaitParams)
    cycles: int = 3
    flight: FlightScenario = field(default_factory=FlightScenario)
    sim: SimConfig = field(default_factory=SimConfig)
    output_dir: str = "out"
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("flight", "crawl"):
            raise ValueError(f"mode must be 'flight' or 'crawl', got {self.mode!r}")
        if self.cycles < 1:
            raise ValueError("cycles must be at least 1")

    def to_dict(self) -> dict:
        d = _to_plain(self)
        if self.robot_file is not None:
            del d["robot"]
        return d


def _to_plain(obj):
    if dataclasses.is_dataclass(obj):
        return {f.name: _to_plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, (list, tuple)):
        return [_to_plain(v) for v in obj]
    return obj


_SECTIONS = {
    "gains": ControllerGains,
    "weights": AllocationWeights,
    "interference": InterferenceConfig,
    "gait": GaitParams,
    "sim": SimConfig,
}


def _build(cls, data: Any, path: str):
    if not isinstance(data, dict):
        raise ConfigError(path, "expected an object")
    names = {f.name: f for f in dataclasses.fields(cls)}
    for key in data:
        if key not in names:
            raise ConfigError(f"{path}.{key}", "unknown field")
    kwargs = {}
    for key, value in data.items():
        if isinstance(value, list):
            value = tuple(value)
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        bad = _guess_field(str(exc), names) or next(iter(data), "")
        raise ConfigError(f"{path}.{bad}" if bad else path, str(exc)) from exc


def _guess_field(message: str, names) -> str | None:
    for n in sorted(names, key=len, reverse=True):
        if n in message:
            return n
    return None


def _build_flight(data: Any) -> FlightScenario:
    if not isinstance(data, dict):
        raise ConfigError("flight", "expected an object")
    data = dict(data)
    if "segments" in data:
        segs = data["segments"]
        if not isinstance(segs, list):
            raise ConfigError("flight.segments", "expected a list")
        data["segments"] = [
            _build(FormSegment, s, f"flight.segments[{i}]") for i, s in enumerate(segs)
        ]
    return _build(FlightScenario, data, "flight")


def config_from_dict(data: dict, base_dir: str | Path | None = None) -> ScenarioConfig:
    if not isinstance(data, dict):
        raise ConfigError("<root>", "expected an object")
    known = {f.name for f in dataclasses.fields(ScenarioConfig)}
    for key in data:
        if key not in known:
            raise ConfigError(key, "unknown field")
    kwargs: dict[str, Any] = {}
    for key, cls in _SECTIONS.items():
        if key in data:
            kwargs[key] = _build(cls, data[key], key)
    if "flight" in data:
        kwargs["flight"] = _build_flight(data["flight"])
    if "robot_file" in data and data["robot_file"] is not None:
        path = Path(data["robot_file"])
        if not path.is_absolute() and base_dir is not None:
            path = Path(base_dir) / path
        if not path.exists():
            raise ConfigError("robot_file", f"file not found: {path}")
        try:
            kwargs["robot"] = load_robot(path)
        except (ModelError, json.JSONDecodeError) as exc:
            raise ConfigError("robot_file", str(exc)) from exc
        kwargs["robot_file"] = str(data["robot_file"])
    elif "robot" in data:
        if not isinstance(data["robot"], dict):
            raise ConfigError("robot", "expected an object")
        try:
            kwargs["robot"] = RobotModel.from_dict(data["robot"])
        except ModelError as exc:
            bad = _guess_field(str(exc), {f.name for f in dataclasses.fields(RobotModel)})
            raise ConfigError(f"robot.{bad}" if bad else "robot", str(exc)) from exc
    for key in ("mode", "cycles", "output_dir", "seed"):
        if key in data:
            kwargs[key] = data[key]
    for key, typ in (("cycles", int), ("seed", int)):
        if key in kwargs and (not isinstance(kwargs[key], int) or isinstance(kwargs[key], bool)):
            raise ConfigError(key, f"expected an integer, got {kwargs[key]!r}")
    try:
        return ScenarioConfig(**kwargs)
    except ValueError as exc:
        bad = _guess_field(str(exc), known) or "mode"
        raise ConfigError(bad, str(exc)) from exc


def load_config(path: str | Path) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError("<file>", f"cannot read {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"<json line {exc.lineno}>", exc.msg) from exc
    return config_from_dict(data, base_dir=path.parent)


def dump_config(config: ScenarioConfig) -> str:
    return json.dumps(config.to_dict(), indent=2)


def bundled_scenario(name: str) -> Path:
    path = SCENARIO_DIR / f"{name}.json"
    if not path.exists():
        raise ConfigError("<scenario>", f"no bundled scenario named {name!r}")
    return path
