"""Unit-suffixed scalars for configuration files ("2.7us", "3.2MHz", "3.3G")."""

from __future__ import annotations

import math
import re

UNITS: dict[str, dict[str, float]] = {
    "frequency": {"Hz": 1.0, "kHz": 1e3, "MHz": 1e6, "GHz": 1e9},
    "rate": {"/s": 1.0, "s^-1": 1.0, "Hz": 1.0, "kHz": 1e3, "MHz": 1e6, "cps": 1.0},
    "time": {"s": 1.0, "ms": 1e-3, "us": 1e-6, "μs": 1e-6, "µs": 1e-6, "ns": 1e-9, "ps": 1e-12},
    "length": {"m": 1.0, "mm": 1e-3, "um": 1e-6, "μm": 1e-6, "µm": 1e-6, "nm": 1e-9},
    "field": {"T": 1.0, "mT": 1e-3, "G": 1e-4, "mG": 1e-7},
    "angle": {"rad": 1.0, "mrad": 1e-3, "deg": math.pi / 180.0},
    "speed": {"m/s": 1.0, "mm/s": 1e-3, "cm/s": 1e-2},
    "ppm": {"ppm": 1.0},
    "dimensionless": {"%": 1e-2, "ppm": 1e-6},
}
BASE_UNIT = {"frequency": "Hz", "rate": "/s", "time": "s", "length": "m", "field": "T",
             "angle": "rad", "speed": "m/s", "ppm": "ppm", "dimensionless": ""}

_NUMBER = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?|[-+]?inf|nan)\s*(.*?)\s*$")


class UnitError(ValueError):
    pass


def parse_quantity(value, kind: str) -> float:
    """Convert a number or unit-suffixed string to SI (bare numbers are SI)."""
    if kind not in UNITS:
        raise UnitError(f"unknown quantity kind {kind!r}")
    if isinstance(value, bool):
        raise UnitError(f"expected a {kind} value, got {value!r}")
    if isinstance(value, (int, float)):
        return float(value)
    if not isinstance(value, str):
        raise UnitError(f"expected a {kind} value, got {value!r}")
    m = _NUMBER.match(value)
    if not m:
        raise UnitError(f"cannot parse {value!r} as a {kind}")
    number, unit = float(m.group(1)), m.group(2)
    if unit == "":
        return number
    table = UNITS[kind]
    if unit not in table:
        allowed = ", ".join(sorted(table))
        raise UnitError(f"unit {unit!r} is not a {kind} unit (allowed: {allowed})")
    return number * table[unit]


def format_quantity(value: float, kind: str) -> str | float:
    """SI value with its base unit; exact under :func:`parse_quantity`."""
    unit = BASE_UNIT[kind]
    if unit == "":
        return float(value)
    return f"{float(value)!r}{unit}"
