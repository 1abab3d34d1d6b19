"""Configuration files and result serialization."""

from __future__ import annotations

import cmath
import csv
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .device import CoherenceParams, DeviceParams

SCHEMA_VERSION = 1

_POSITIVE = {"type": "number", "exclusiveMinimum": 0}

CONFIG_SCHEMA = {
    "type": "object",
    "required": ["schema_version", "device"],
    "additionalProperties": False,
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "description": {"type": "string"},
        "device": {
            "type": "object",
            "required": ["f_control", "f_target", "anharm_control", "anharm_target", "J"],
            "additionalProperties": False,
            "properties": {
                "f_control": _POSITIVE,
                "f_target": _POSITIVE,
                "anharm_control": {"type": "number", "exclusiveMaximum": 0},
                "anharm_target": {"type": "number", "exclusiveMaximum": 0},
                "J": _POSITIVE,
                "levels": {"type": "integer", "minimum": 2, "maximum": 5},
                "crosstalk": {
                    "type": "object",
                    "required": ["magnitude", "phase_rad"],
                    "additionalProperties": False,
                    "properties": {"magnitude": {"type": "number", "minimum": 0}, "phase_rad": {"type": "number"}},
                },
            },
        },
        "coherence": {
            "type": "object",
            "additionalProperties": False,
            "properties": {k: _POSITIVE for k in ("T1_control", "T1_target", "T2_control", "T2_target")},
        },
        "tomography": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n_points": {"type": "integer", "minimum": 12},
                "stop_ns": _POSITIVE,
            },
        },
        "calibration": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "gate_time_ns": _POSITIVE,
                "n_phases": {"type": "integer", "minimum": 8},
                "n_cancel_amps": {"type": "integer", "minimum": 3},
                "max_cr_amp_mhz": _POSITIVE,
            },
        },
        "rb": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "lengths": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 3},
                "n_seqs": {"type": "integer", "minimum": 1},
            },
        },
    },
}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Config:
    device: DeviceParams
    coherence: CoherenceParams = CoherenceParams()
    tomography: dict = field(default_factory=dict)
    calibration: dict = field(default_factory=dict)
    rb: dict = field(default_factory=dict)
    source: str = ""


def builtin_configs() -> list[str]:
    return sorted(p.name for p in resources.files("crtune").joinpath("configs").iterdir() if p.name.endswith(".json"))


def _read(path: str | Path) -> tuple[dict, str]:
    p = Path(path)
    if not p.exists() and p.name == str(path) and p.name in builtin_configs():
        text = resources.files("crtune").joinpath("configs", p.name).read_text()
        return json.loads(text), f"builtin:{p.name}"
    try:
        return json.loads(p.read_text()), str(p)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path} (builtins: {', '.join(builtin_configs())})") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None


def parse_config(data: dict, source: str = "<dict>") -> Config:
    try:
        jsonschema.validate(data, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(x) for x in exc.absolute_path) or "<root>"
        raise ConfigError(f"{source}: {where}: {exc.message}") from None
    dev = dict(data["device"])
    xt = dev.pop("crosstalk", None)
    if xt is not None:
        dev["crosstalk"] = cmath.rect(xt["magnitude"], xt["phase_rad"])
    try:
        device = DeviceParams(**dev)
        coherence = CoherenceParams(**data.get("coherence", {}))
    except ValueError as exc:
        raise ConfigError(f"{source}: {exc}") from None
    return Config(device, coherence, data.get("tomography", {}), data.get("calibration", {}), data.get("rb", {}),
                  source)


def load_config(path: str | Path) -> Config:
    """Load and validate a device config; bare names like ``paper.json`` fall back to the bundled files."""
    data, source = _read(path)
    return parse_config(data, source)


def config_to_dict(cfg: Config) -> dict:
    d = cfg.device
    out = {
        "schema_version": SCHEMA_VERSION,
        "device": {
            "f_control": d.f_control, "f_target": d.f_target, "anharm_control": d.anharm_control,
            "anharm_target": d.anharm_target, "J": d.J, "levels": d.levels,
            "crosstalk": {"magnitude": abs(d.crosstalk), "phase_rad": cmath.phase(d.crosstalk)},
        },
        "coherence": {k: getattr(cfg.coherence, k) for k in ("T1_control", "T1_target", "T2_control", "T2_target")},
    }
    for key in ("tomography", "calibration", "rb"):
        if getattr(cfg, key):
            out[key] = dict(getattr(cfg, key))
    return out


# -- writers -------------------------------------------------------------------------------


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return "nan" if math.isnan(v) else repr(v)
    return str(v)


def write_csv(path: str | Path, header: list[str], rows) -> Path:
    """CSV with a header row; floats written with full precision."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return None if math.isnan(v) or math.isinf(v) else v
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    return obj


def write_json(path: str | Path, data: dict) -> Path:
    """Pretty JSON; a ``schema_version`` is added when missing. NaN and inf become null."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = dict(data)
    data.setdefault("schema_version", SCHEMA_VERSION)
    path.write_text(json.dumps(_jsonable(data), indent=2, sort_keys=True) + "\n")
    return path
