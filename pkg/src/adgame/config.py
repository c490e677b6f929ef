"""Experiment configuration: strict TOML schema, overrides, serialization.

A config file has six blocks: ``model`` (matrices as row arrays), ``sim``
(grid and seed), ``estimator`` (WLS initialization), ``strategy`` (gain
selection and dither), ``diagnostics`` (ensemble sizes and thresholds) and
``output``.  Unknown blocks or keys are rejected by name rather than
silently defaulted, so misspellings cannot change an experiment.  Parsed
configs serialize back to TOML losslessly (parse -> serialize -> parse is
the identity on the resolved document).
"""

from __future__ import annotations

import copy
import sys
from dataclasses import dataclass

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ContractViolationError
from .model import GameModel
from .sim import EstimatorInit, SimConfig

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "load_config",
    "parse_config",
    "serialize_config",
    "apply_override",
]


class ConfigError(ContractViolationError):
    """Invalid, incomplete or unknown configuration content."""


# Schema: block -> key -> (type tag, required).  Type tags:
#   "matrix"  list of equal-length rows of numbers
#   "vector"  list of numbers
#   "number"  int or float (stored as float)
#   "int"     integer
#   "bool"    boolean
#   "str"     string
#   "numlist" list of numbers (kept as given)
#   "intlist" list of integers
#   "strlist" list of strings
_SCHEMA = {
    "model": {
        "A": ("matrix", True),
        "B1": ("matrix", True),
        "B2": ("matrix", True),
        "D": ("matrix", True),
        "Qw": ("matrix", True),
        "R1": ("matrix", True),
        "R2": ("matrix", True),
    },
    "sim": {
        "T": ("number", True),
        "h": ("number", True),
        "seed": ("int", True),
        "x0": ("vector", True),
        "record_stride": ("int", False),
    },
    "estimator": {
        "theta0": ("matrix", False),
        "cov0_scale": ("number", False),
        "delta": ("number", False),
        "gamma_reg": ("number", False),
    },
    "strategy": {
        "T0": ("number", False),
        "dither": ("bool", False),
        "gamma_floor_epoch": ("int", False),
    },
    "diagnostics": {
        "n_seeds": ("int", False),
        "checkpoints": ("intlist", False),
        "consistency_threshold_frac": ("number", False),
        "nash_rel_tol": ("number", False),
        "deviations": ("numlist", False),
        "dither_epochs": ("int", False),
        "dither_milestones": ("intlist", False),
        "dither_h": ("number", False),
    },
    "output": {
        "directory": ("str", False),
        "formats": ("strlist", False),
    },
}

_DEFAULTS = {
    "sim": {"record_stride": 10},
    "estimator": {"cov0_scale": 1.0, "delta": 1.0, "gamma_reg": 0.2},
    "strategy": {"T0": 1.0, "dither": True, "gamma_floor_epoch": 2},
    "diagnostics": {
        "n_seeds": 20,
        "checkpoints": [200, 1000, 5000],
        "consistency_threshold_frac": 0.2,
        "nash_rel_tol": 0.15,
        "deviations": [0.3, -0.3],
        "dither_epochs": 200,
        "dither_milestones": [50, 200],
        "dither_h": 0.01,
    },
    "output": {"directory": "out", "formats": ["csv"]},
}


def _is_number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _check_value(block: str, key: str, tag: str, v):
    path = f"{block}.{key}"
    if tag == "number":
        if not _is_number(v):
            raise ConfigError(f"{path}: expected a number, got {v!r}")
        return float(v)
    if tag == "int":
        if not isinstance(v, int) or isinstance(v, bool):
            raise ConfigError(f"{path}: expected an integer, got {v!r}")
        return v
    if tag == "bool":
        if not isinstance(v, bool):
            raise ConfigError(f"{path}: expected a boolean, got {v!r}")
        return v
    if tag == "str":
        if not isinstance(v, str):
            raise ConfigError(f"{path}: expected a string, got {v!r}")
        return v
    if tag == "vector" or tag == "numlist":
        if not isinstance(v, list) or not v or not all(_is_number(e) for e in v):
            raise ConfigError(f"{path}: expected a non-empty list of numbers")
        return [float(e) for e in v]
    if tag == "intlist":
        if not isinstance(v, list) or not v or not all(
            isinstance(e, int) and not isinstance(e, bool) for e in v
        ):
            raise ConfigError(f"{path}: expected a non-empty list of integers")
        return list(v)
    if tag == "strlist":
        if not isinstance(v, list) or not all(isinstance(e, str) for e in v):
            raise ConfigError(f"{path}: expected a list of strings")
        return list(v)
    if tag == "matrix":
        if (
            not isinstance(v, list)
            or not v
            or not all(isinstance(row, list) and row for row in v)
            or len({len(row) for row in v}) != 1
            or not all(_is_number(e) for row in v for e in row)
        ):
            raise ConfigError(f"{path}: expected a matrix as equal-length rows of numbers")
        return [[float(e) for e in row] for row in v]
    raise AssertionError(f"unhandled schema tag {tag}")


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated, fully-resolved experiment description."""

    data: dict

    def __getitem__(self, block: str) -> dict:
        return self.data[block]

    def to_model(self) -> GameModel:
        mb = self.data["model"]
        return GameModel(
            A=np.array(mb["A"]),
            B1=np.array(mb["B1"]),
            B2=np.array(mb["B2"]),
            D=np.array(mb["D"]),
            Qw=np.array(mb["Qw"]),
            R1=np.array(mb["R1"]),
            R2=np.array(mb["R2"]),
        )

    def to_sim_config(self, seed: int | None = None) -> SimConfig:
        sb = self.data["sim"]
        return SimConfig(
            T=sb["T"],
            h=sb["h"],
            seed=sb["seed"] if seed is None else int(seed),
            x0=np.array(sb["x0"]),
            dither_enabled=self.data["strategy"]["dither"],
            record_stride=sb["record_stride"],
        )

    def to_estimator_init(self) -> EstimatorInit:
        eb = self.data["estimator"]
        if "theta0" not in eb:
            raise ConfigError("estimator.theta0 is required for adaptive runs")
        return EstimatorInit(
            theta0=np.array(eb["theta0"]),
            cov0_scale=eb["cov0_scale"],
            delta=eb["delta"],
            gamma_reg=eb["gamma_reg"],
        )


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate a TOML document against the strict schema."""
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"TOML syntax error: {exc}") from exc
    return _validate(raw)


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, "r") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)


def _validate(raw: dict) -> ExperimentConfig:
    unknown_blocks = sorted(set(raw) - set(_SCHEMA))
    if unknown_blocks:
        raise ConfigError(f"unknown config block(s): {', '.join(unknown_blocks)}")
    data: dict = {}
    problems: list[str] = []
    for block, keys in _SCHEMA.items():
        given = raw.get(block, {})
        if not isinstance(given, dict):
            problems.append(f"{block}: expected a table")
            continue
        unknown = sorted(set(given) - set(keys))
        for key in unknown:
            problems.append(f"unknown key {block}.{key}")
        out = copy.deepcopy(_DEFAULTS.get(block, {}))
        for key, (tag, required) in keys.items():
            if key in given:
                out[key] = _check_value(block, key, tag, given[key])
            elif required:
                problems.append(f"missing required key {block}.{key}")
        data[block] = out
    if "model" not in raw:
        problems.insert(0, "missing required block: model")
    if "sim" not in raw:
        problems.insert(0, "missing required block: sim")
    if problems:
        raise ConfigError("; ".join(problems))
    return ExperimentConfig(data=data)


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, str):
        out = v.replace("\\", "\\\\").replace('"', '\\"')
        return f'"{out}"'
    if isinstance(v, list):
        return "[" + ", ".join(_toml_value(e) for e in v) + "]"
    raise ConfigError(f"cannot serialize value of type {type(v).__name__}")


def serialize_config(cfg: ExperimentConfig) -> str:
    """Emit the resolved config as TOML; inverse of parse on resolved data."""
    lines: list[str] = []
    for block in _SCHEMA:
        table = cfg.data.get(block, {})
        if not table:
            continue
        lines.append(f"[{block}]")
        for key in _SCHEMA[block]:
            if key in table:
                lines.append(f"{key} = {_toml_value(table[key])}")
        lines.append("")
    return "\n".join(lines)


def apply_override(cfg: ExperimentConfig, spec: str) -> ExperimentConfig:
    """Apply one ``block.key=VALUE`` override; VALUE uses TOML value syntax."""
    if "=" not in spec:
        raise ConfigError(f"override must look like block.key=value, got {spec!r}")
    path, _, value_text = spec.partition("=")
    path = path.strip()
    parts = path.split(".")
    if len(parts) != 2:
        raise ConfigError(f"override key must be block.key, got {path!r}")
    block, key = parts
    if block not in _SCHEMA:
        raise ConfigError(f"unknown config block: {block}")
    if key not in _SCHEMA[block]:
        raise ConfigError(f"unknown key {block}.{key}")
    try:
        value = tomllib.loads(f"v = {value_text.strip()}")["v"]
    except tomllib.TOMLDecodeError:
        value = value_text.strip()
    tag, _ = _SCHEMA[block][key]
    if tag == "number" and isinstance(value, int):
        value = float(value)
    data = copy.deepcopy(cfg.data)
    data[block][key] = _check_value(block, key, tag, value)
    return ExperimentConfig(data=data)
