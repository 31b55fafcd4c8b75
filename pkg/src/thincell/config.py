"""Run configuration: YAML file -> fully resolved, SI-valued nested dict.

Values may be plain numbers (SI) or strings carrying a unit, e.g. ``"5 um"``,
``"120 C"``, ``"2e13 cm^-3"``, ``"20 uT"``. Unknown keys are rejected with the
closest valid name. Angular frequencies (``Omega_*``) given in Hz-type units
are cyclic and converted with a factor 2 pi; bare numbers are already rad/s.
"""

from __future__ import annotations

import copy
import difflib
import hashlib
import json
import math
import re
from pathlib import Path

import yaml

from .errors import ConfigError

__all__ = [
    "SCHEMA",
    "REQUIRED",
    "DEFAULTS",
    "load_config",
    "resolve",
    "parse_quantity",
    "config_digest",
    "canonical_json",
    "apply_override",
]

_LENGTH = {"m": 1.0, "cm": 1e-2, "mm": 1e-3, "um": 1e-6, "μm": 1e-6, "µm": 1e-6, "nm": 1e-9}
_FIELD = {"T": 1.0, "mT": 1e-3, "uT": 1e-6, "μT": 1e-6, "µT": 1e-6, "nT": 1e-9, "G": 1e-4, "mG": 1e-7}
_DENSITY = {"m^-3": 1.0, "m-3": 1.0, "cm^-3": 1e6, "cm-3": 1e6}
_RATE = {"s^-1": 1.0, "1/s": 1.0, "Hz": 1.0, "kHz": 1e3, "MHz": 1e6}
_TIME = {"s": 1.0, "ms": 1e-3, "us": 1e-6, "μs": 1e-6, "µs": 1e-6, "ns": 1e-9}
_ANGULAR = {"rad/s": 1.0, "Hz": 2 * math.pi, "kHz": 2e3 * math.pi, "MHz": 2e6 * math.pi}
_AREA = {"m^2": 1.0, "cm^2": 1e-4}
_MASS = {"kg": 1.0, "u": 1.66053906660e-27, "amu": 1.66053906660e-27}
_NONE = {"": 1.0}

_NUM = r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?"
_QTY = re.compile(rf"^\s*({_NUM})\s*([^\s].*?)?\s*$")

# kind tokens: ("q", unit table) | "temp" | "int" | "bool" | "str" | ("choice", options)
# | ("list", unit table) | "path" | "gamma" (rate or the literal "R_SE")
SCHEMA: dict[str, dict] = {
    "species": {
        "name": "str",
        "mass": ("q", _MASS),
        "g_F": ("q", _NONE),
        "Gamma_e": ("q", _ANGULAR),
        "sigma_SE": ("q", _AREA),
        "g_e": ("q", _NONE),
    },
    "cell": {
        "W": ("q", _LENGTH),
        "L": ("q", _LENGTH),
        "w_pu": ("q", _LENGTH),
        "R_pr": ("q", _LENGTH),
        "lateral_extent": ("q", _LENGTH),
    },
    "thermal": {"T": "temp", "n": ("q", _DENSITY)},
    "fields": {
        "B_parallel": ("q", _FIELD),
        "B_perp": ("q", _FIELD),
        "Gamma_coh": "gamma",
        "c1": ("q", _NONE),
        "c2": ("q", _NONE),
    },
    "lineshape": {
        "B_min": ("q", _FIELD),
        "B_max": ("q", _FIELD),
        "n_points": "int",
        "span": ("q", _NONE),
        "strategy": ("choice", ("speed-average", "joint-2d")),
        "speed_model": ("choice", ("planar", "thermal3d")),
        "tol": ("q", _NONE),
    },
    "scan_fwhm": {"D_list": ("list", _LENGTH), "n_points": "int", "span": ("q", _NONE), "B_perp": ("q", _FIELD)},
    "distributions": {"n_points": "int", "eta_max": ("q", _NONE)},
    "obe": {
        "Omega_pu": ("q", _ANGULAR),
        "Omega_pr": ("q", _ANGULAR),
        "detuning": ("q", _ANGULAR),
        "polarization": ("q", _NONE),
        "T1": ("q", _TIME),
        "T2": ("q", _TIME),
        "probe_duration": ("q", _TIME),
        "samples_per_phase": "int",
        "L_sep": ("q", _LENGTH),
    },
    "montecarlo": {
        "n_samples": "int",
        "seed": "int",
        "batch_size": "int",
        "velocity_mode": ("choice", ("planar", "physical")),
        "n_points": "int",
        "span": ("q", _NONE),
        "n_bins": "int",
    },
    "fit": {
        "pump_on": "path",
        "pump_off": "path",
        "fit_offset": "bool",
        "Gamma_init": "gamma",
        "max_iter": "int",
        "strategy": ("choice", ("speed-average", "joint-2d")),
    },
}

REQUIRED = ("cell.W", "cell.L", "thermal.T", "thermal.n")

DEFAULTS: dict[str, dict] = {
    "species": {"name": "Rb87"},
    "cell": {"w_pu": 0.5e-3, "R_pr": 0.5e-3, "lateral_extent": 12e-3},
    "thermal": {},
    "fields": {"B_parallel": 0.0, "B_perp": 20e-6, "Gamma_coh": 0.0, "c1": 0.0, "c2": 1.0},
    "lineshape": {"n_points": 481, "span": 6.0, "strategy": "speed-average", "speed_model": "planar", "tol": 1e-10},
    "scan_fwhm": {"D_list": [1e-3, 2e-3, 3e-3, 4e-3, 5e-3, 6e-3, 7e-3, 8e-3], "n_points": 481, "span": 6.0,
                  "B_perp": 0.0},
    "distributions": {"n_points": 401, "eta_max": 4.0},
    "obe": {
        "Omega_pu": 2 * math.pi * 50e6,
        "Omega_pr": 2 * math.pi * 2e6,
        "detuning": 0.0,
        "polarization": 0.0,
        "samples_per_phase": 200,
        "L_sep": 4e-3,
    },
    "montecarlo": {
        "n_samples": 10_000_000,
        "seed": 0,
        "batch_size": 1_000_000,
        "velocity_mode": "planar",
        "n_points": 41,
        "span": 4.0,
        "n_bins": 40,
    },
    "fit": {"fit_offset": False, "max_iter": 100, "strategy": "speed-average"},
}


def parse_quantity(value, units: dict, key: str) -> float:
    """Convert a number or "<number> <unit>" string to SI."""
    if isinstance(value, bool):
        raise ConfigError(f"{key}: expected a number, got a boolean")
    if isinstance(value, (int, float)):
        return float(value)
    if not isinstance(value, str):
        raise ConfigError(f"{key}: expected a number or a quantity string, got {type(value).__name__}")
    m = _QTY.match(value)
    if not m:
        raise ConfigError(f"{key}: cannot parse quantity {value!r}")
    num, unit = float(m.group(1)), (m.group(2) or "")
    if unit not in units:
        if unit == "" and "" not in units:
            return num
        valid = ", ".join(u for u in units if u) or "none"
        raise ConfigError(f"{key}: unknown unit {unit!r} (valid: {valid})")
    return num * units[unit]


def _parse_temperature(value, key):
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    if isinstance(value, str):
        m = _QTY.match(value)
        if m:
            num, unit = float(m.group(1)), (m.group(2) or "K")
            if unit == "K":
                return num
            if unit in ("C", "degC", "°C"):
                return num + 273.15
    raise ConfigError(f"{key}: cannot parse temperature {value!r} (use K or C)")


def _parse(kind, value, key):
    if value is None:
        return None
    if kind == "temp":
        return _parse_temperature(value, key)
    if kind == "int":
        if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value:
            raise ConfigError(f"{key}: expected an integer, got {value!r}")
        return int(value)
    if kind == "bool":
        if not isinstance(value, bool):
            raise ConfigError(f"{key}: expected true/false, got {value!r}")
        return value
    if kind in ("str", "path"):
        if not isinstance(value, str):
            raise ConfigError(f"{key}: expected a string, got {value!r}")
        return value
    if kind == "gamma":
        if value == "R_SE":
            return "R_SE"
        return parse_quantity(value, _RATE, key)
    tag, arg = kind
    if tag == "q":
        return parse_quantity(value, arg, key)
    if tag == "choice":
        if value not in arg:
            raise ConfigError(f"{key}: {value!r} is not one of {list(arg)}")
        return value
    if tag == "list":
        if not isinstance(value, (list, tuple)) or not value:
            raise ConfigError(f"{key}: expected a non-empty list")
        return [parse_quantity(v, arg, f"{key}[{i}]") for i, v in enumerate(value)]
    raise AssertionError(kind)


def _suggest(name, options):
    """Nearest valid name (case-insensitive similarity, ties broken by order) plus the full list."""
    options = list(options)

    def score(opt):
        a, b = name.lower(), opt.lower()
        ratio = difflib.SequenceMatcher(None, a, b).ratio()
        return (ratio + (0.5 if a.startswith(b) or b.startswith(a) else 0.0), -options.index(opt))

    best = max(options, key=score)
    return f"; did you mean {best!r}? (valid keys: {', '.join(sorted(options))})"


def resolve(raw: dict | None) -> dict:
    """Validate ``raw`` and merge it over the defaults (all values SI)."""
    raw = {} if raw is None else raw
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping of sections")
    out = copy.deepcopy(DEFAULTS)
    for section, body in raw.items():
        if section not in SCHEMA:
            raise ConfigError(f"unknown section {section!r}{_suggest(section, SCHEMA)}")
        if body is None:
            continue
        if not isinstance(body, dict):
            raise ConfigError(f"section {section!r} must be a mapping")
        schema = SCHEMA[section]
        for key, value in body.items():
            if key not in schema:
                raise ConfigError(f"unknown key {section}.{key}{_suggest(key, schema)}")
            out[section][key] = _parse(schema[key], value, f"{section}.{key}")
    for dotted in REQUIRED:
        s, k = dotted.split(".")
        if out[s].get(k) is None:
            raise ConfigError(f"missing required key {dotted}")
    if out["species"]["name"] != "Rb87" and "mass" not in out["species"]:
        raise ConfigError("species other than Rb87 need explicit mass, g_F and Gamma_e")
    return out


def load_config(path, overrides: list[str] | None = None) -> dict:
    """Read a YAML config, apply ``section.key=value`` overrides, resolve."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {str(path)!r}: {exc.strerror}") from exc
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {str(path)!r} is not valid YAML: {exc}") from exc
    raw = {} if raw is None else raw
    for item in overrides or ():
        raw = apply_override(raw, item)
    return resolve(raw)


def apply_override(raw: dict, item: str) -> dict:
    """Return a copy of ``raw`` with ``section.key=value`` applied (YAML value)."""
    if "=" not in item:
        raise ConfigError(f"override {item!r} must look like section.key=value")
    lhs, rhs = item.split("=", 1)
    parts = lhs.strip().split(".")
    if len(parts) != 2 or not all(parts):
        raise ConfigError(f"override key {lhs!r} must be section.key")
    out = copy.deepcopy(raw) if isinstance(raw, dict) else {}
    out.setdefault(parts[0], {})
    if out[parts[0]] is None:
        out[parts[0]] = {}
    try:
        out[parts[0]][parts[1]] = yaml.safe_load(rhs)
    except yaml.YAMLError as exc:
        raise ConfigError(f"override {item!r}: bad value: {exc}") from exc
    return out


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def config_digest(resolved: dict) -> str:
    return hashlib.sha256(canonical_json(resolved).encode()).hexdigest()
