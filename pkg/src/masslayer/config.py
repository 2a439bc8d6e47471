"""Run configuration: JSON schema, defaults and model construction."""

from __future__ import annotations

import copy
import json
from pathlib import Path

import jsonschema

from .errors import ConfigError
from .model import Tolerances, make_model

_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["model"],
    "properties": {
        "model": {
            "type": "object",
            "additionalProperties": False,
            "required": ["name"],
            "properties": {
                "name": {"enum": ["cubic", "hill"]},
                "params": {"type": "object", "additionalProperties": _NUM},
            },
        },
        "d": _POS,
        "xi": {"type": ["number", "null"]},
        "eps": _POS,
        "eps_list": {"type": ["array", "null"], "items": _POS, "minItems": 1},
        "grid_n": {"type": ["integer", "null"], "minimum": 3},
        "cells_per_eps": _POS,
        "direction": {"enum": ["up", "down"]},
        "maxwell_select": {"type": ["integer", "null"], "minimum": 0},
        "tolerances": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "newton": _POS,
                "newton_max_iter": {"type": "integer", "minimum": 1},
                "root_residual": _POS,
                "quad_abs": _POS,
                "bisection": _POS,
                "fold_margin": _POS,
            },
        },
        "check": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"n_samples": {"type": "integer", "minimum": 3}},
        },
        "profile": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "half_width": {"type": ["number", "null"], "exclusiveMinimum": 0},
                "n_points": {"type": "integer", "minimum": 3},
            },
        },
        "spectrum": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "re_min": {"type": ["number", "null"]},
                "count": {"type": "integer", "minimum": 1},
                "method": {"enum": ["auto", "dense", "sparse"]},
            },
        },
        "simulate": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "t_end": _POS,
                "dt": {"type": ["number", "null"], "exclusiveMinimum": 0},
                "snapshot_every": {"type": ["number", "null"], "exclusiveMinimum": 0},
                "initial": {"enum": ["stationary", "displaced", "ignition"]},
                "shift": _NUM,
                "ignition_width": _POS,
                "frozen_v": {"type": "boolean"},
                "record_every": {"type": "integer", "minimum": 1},
                "fit_window": {"type": ["array", "null"], "items": _NUM, "minItems": 2, "maxItems": 2},
            },
        },
        "sweep": {
            "type": "object",
            "additionalProperties": False,
            "required": ["command", "axes"],
            "properties": {
                "command": {"enum": ["check", "analyze", "solve", "spectrum", "simulate"]},
                "axes": {"type": "object", "additionalProperties": {"type": "array", "minItems": 1}},
            },
        },
    },
}

DEFAULTS = {
    "d": 1.0,
    "xi": None,
    "eps": 0.01,
    "eps_list": None,
    "grid_n": None,
    "cells_per_eps": 8.0,
    "direction": "up",
    "maxwell_select": None,
    "tolerances": {
        "newton": 1e-11,
        "newton_max_iter": 50,
        "root_residual": 1e-12,
        "quad_abs": 1e-12,
        "bisection": 1e-14,
        "fold_margin": 1e-6,
    },
    "check": {"n_samples": 64},
    "profile": {"half_width": None, "n_points": 4001},
    "spectrum": {"re_min": -1.0, "count": 40, "method": "auto"},
    "simulate": {
        "t_end": 100.0,
        "dt": None,
        "snapshot_every": None,
        "initial": "displaced",
        "shift": 0.05,
        "ignition_width": 0.1,
        "frozen_v": False,
        "record_every": 1,
        "fit_window": None,
    },
}

MODEL_DEFAULTS = {"cubic": {"alpha": 0.2, "beta": 0.5}, "hill": {"kappa": 0.067}}


def _merge(base, override):
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def resolve(raw: dict) -> dict:
    """Validate a raw config and fill every default.

    Raises
    ------
    ConfigError
        Schema violations, unknown keys, or model parameters out of range.
    """
    try:
        jsonschema.validate(raw, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"invalid config at {where}: {exc.message}") from None
    cfg = _merge(DEFAULTS, raw)
    name = cfg["model"]["name"]
    params = _merge(MODEL_DEFAULTS[name], cfg["model"].get("params", {}))
    unknown = set(params) - set(MODEL_DEFAULTS[name])
    if unknown:
        raise ConfigError(f"unknown parameter(s) for model {name!r}: {sorted(unknown)}")
    cfg["model"] = {"name": name, "params": params}
    build_model(cfg)
    return cfg


def load(path) -> dict:
    try:
        with open(Path(path)) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    return resolve(raw)


def build_model(cfg):
    try:
        return make_model(cfg["model"]["name"], cfg["model"]["params"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid model parameters: {exc}") from None


def build_tolerances(cfg) -> Tolerances:
    t = cfg["tolerances"]
    return Tolerances(root_residual=t["root_residual"], quad_abs=t["quad_abs"],
                      bisection=t["bisection"], fold_margin=t["fold_margin"])


def set_path(cfg: dict, dotted: str, value):
    """Assign ``value`` at a dotted key such as ``model.params.kappa``."""
    keys = dotted.split(".")
    node = cfg
    for k in keys[:-1]:
        node = node.setdefault(k, {})
    node[keys[-1]] = value
