"""Experiment configuration: nested YAML sections with unit-suffixed values."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .physics import AtomParams, CavityParams, DriveParams
from .simulator.beam import BeamParams
from .simulator.detector import BackgroundParams, DetectorParams
from .units import UnitError, format_quantity, parse_quantity

# Detected photons per atom for the two collection schemes.
MODE_ALPHA = {"faraday": 0.196, "spontaneous": 0.036}


class ConfigError(ValueError):
    """Invalid configuration; the message starts with the offending field."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass(frozen=True)
class EmissionParams:
    """How the per-atom emission rate is set.

    The peak rate is calibrated so the large-bin Mandel intercept equals
    ``alpha_target`` (default from ``mode``) at drive ``calibration_Y``, unless
    ``peak_rate`` is given explicitly.
    """

    mode: str = "faraday"
    alpha_target: float | None = None
    calibration_Y: float = 0.4
    peak_rate: float | None = None
    antibunching: bool = True

    def __post_init__(self):
        if self.mode not in MODE_ALPHA:
            raise ValueError(f"emission.mode must be one of {sorted(MODE_ALPHA)}")
        if self.alpha_target is not None and not self.alpha_target >= 0:
            raise ValueError("emission.alpha_target must be >= 0")
        if not self.calibration_Y > 0:
            raise ValueError("emission.calibration_Y must be > 0")
        if self.peak_rate is not None and not self.peak_rate >= 0:
            raise ValueError("emission.peak_rate must be >= 0")

    @property
    def alpha(self) -> float:
        return MODE_ALPHA[self.mode] if self.alpha_target is None else self.alpha_target


@dataclass(frozen=True)
class RunParams:
    duration: float = 10.0
    seed: int = 1
    output_dir: str = "out"
    chunk_duration: float = 1.0
    record_transits: bool = False
    format: str = "binary"

    def __post_init__(self):
        if not self.duration > 0:
            raise ValueError("run.duration must be > 0")
        if not self.chunk_duration > 0:
            raise ValueError("run.chunk_duration must be > 0")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("run.seed must be an unsigned 64-bit integer")
        if self.format not in ("binary", "csv"):
            raise ValueError("run.format must be 'binary' or 'csv'")


SECTIONS = {
    "cavity": CavityParams,
    "atom": AtomParams,
    "beam": BeamParams,
    "background": BackgroundParams,
    "detector": DetectorParams,
    "drive": DriveParams,
    "emission": EmissionParams,
    "run": RunParams,
}

# Quantity kind per field; fields not listed are plain scalars of the default's type.
KINDS = {
    "cavity": {"kappa_over_2pi": "frequency", "waist_w0": "length", "wavelength": "length",
               "finesse": "dimensionless", "input_transmission_ppm": "ppm",
               "output_transmission_ppm": "ppm", "length": "length"},
    "atom": {"gamma_over_2pi": "frequency", "gamma_partial": "frequency",
             "Gamma_partial": "frequency"},
    "beam": {"flux": "rate", "mean_speed": "speed", "speed_sigma": "speed",
             "tilt_angle": "angle", "transverse_sigma": "speed",
             "mode_extent_factor": "dimensionless"},
    "background": {"dark_rate_per_detector": "rate", "mot_scatter_rate": "rate",
                   "birefringence_rate_per_Y": "rate"},
    "detector": {"efficiency": "dimensionless", "dead_time": "time",
                 "afterpulse_probability": "dimensionless", "afterpulse_delay_mean": "time",
                 "splitter_ratio": "dimensionless", "timestamp_quantum": "time"},
    "drive": {"intensity_Y": "dimensionless"},
    "emission": {"alpha_target": "dimensionless", "calibration_Y": "dimensionless",
                 "peak_rate": "rate"},
    "run": {"duration": "time", "chunk_duration": "time"},
}


def _coerce(section: str, name: str, value, default):
    key = f"{section}.{name}"
    kind = KINDS.get(section, {}).get(name)
    try:
        if value is None:
            return None
        if kind is not None:
            return parse_quantity(value, kind)
        if isinstance(default, bool):
            if not isinstance(value, bool):
                raise ConfigError(key, f"expected true/false, got {value!r}")
            return value
        if isinstance(default, int):
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigError(key, f"expected an integer, got {value!r}")
            return value
        if isinstance(default, tuple):
            if not isinstance(value, (list, tuple)):
                raise ConfigError(key, f"expected a list, got {value!r}")
            return tuple(float(v) for v in value)
        if isinstance(default, str):
            if not isinstance(value, str):
                raise ConfigError(key, f"expected a string, got {value!r}")
            return value
        return float(value)
    except UnitError as exc:
        raise ConfigError(key, str(exc)) from None
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(key, str(exc)) from None


def _field_from_message(section: str, message: str) -> str:
    head = message.split(" ", 1)[0]
    return head if head.startswith(section + ".") else section


@dataclass(frozen=True)
class ExperimentConfig:
    cavity: CavityParams = field(default_factory=CavityParams)
    atom: AtomParams = field(default_factory=AtomParams)
    beam: BeamParams = field(default_factory=BeamParams)
    background: BackgroundParams = field(default_factory=BackgroundParams)
    detector: DetectorParams = field(default_factory=DetectorParams)
    drive: DriveParams = field(default_factory=DriveParams)
    emission: EmissionParams = field(default_factory=EmissionParams)
    run: RunParams = field(default_factory=RunParams)

    def __post_init__(self):
        for name, cls in SECTIONS.items():
            if not isinstance(getattr(self, name), cls):
                raise ConfigError(name, f"expected {cls.__name__}")

    # ---- construction -------------------------------------------------

    @classmethod
    def from_dict(cls, data: dict | None) -> "ExperimentConfig":
        data = data or {}
        if not isinstance(data, dict):
            raise ConfigError("config", "top level must be a mapping of sections")
        if "config" in data and isinstance(data["config"], dict):
            data = data["config"]  # ground-truth sidecar
        unknown = set(data) - set(SECTIONS)
        if unknown:
            raise ConfigError(sorted(unknown)[0], "unknown section")
        sections = {}
        for name, ptype in SECTIONS.items():
            raw = data.get(name) or {}
            if not isinstance(raw, dict):
                raise ConfigError(name, "section must be a mapping")
            fields = {f.name: f for f in dataclasses.fields(ptype)}
            kwargs = {}
            for key, value in raw.items():
                if key not in fields:
                    raise ConfigError(f"{name}.{key}", "unknown field")
                kwargs[key] = _coerce(name, key, value, fields[key].default)
            try:
                sections[name] = ptype(**kwargs)
            except ConfigError:
                raise
            except (TypeError, ValueError) as exc:
                raise ConfigError(_field_from_message(name, str(exc)), str(exc)) from None
        return cls(**sections)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise FileNotFoundError(f"cannot read config {path}: {exc.strerror}") from None
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError(str(path), f"YAML parse error: {exc}") from None
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        out = {}
        for name in SECTIONS:
            obj = getattr(self, name)
            sec = {}
            for f in dataclasses.fields(obj):
                value = getattr(obj, f.name)
                kind = KINDS.get(name, {}).get(f.name)
                if value is None:
                    sec[f.name] = None
                elif kind is not None:
                    sec[f.name] = format_quantity(value, kind)
                elif isinstance(value, tuple):
                    sec[f.name] = [float(v) for v in value]
                else:
                    sec[f.name] = value
            out[name] = sec
        return out

    def dumps(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False, allow_unicode=True)

    def dump(self, path) -> Path:
        path = Path(path)
        path.write_text(self.dumps())
        return path

    def replace(self, **changes) -> "ExperimentConfig":
        """Override fields by dotted name, e.g. ``replace(**{"drive.intensity_Y": 0.4})``."""
        data = {name: dataclasses.asdict(getattr(self, name)) for name in SECTIONS}
        for dotted, value in changes.items():
            section, _, key = dotted.partition(".")
            if section not in data or key not in data[section]:
                raise ConfigError(dotted, "unknown field")
            data[section][key] = value
        return ExperimentConfig.from_dict(data)
