"""Run configuration: one JSON document covering every pipeline stage.

Unknown keys are rejected, defaults are materialized (all seeds end up
explicit), and every command writes the resolved snapshot next to its
outputs so runs are replayable.
"""

from __future__ import annotations

import json
import os
from copy import deepcopy
from pathlib import Path

import jsonschema

from .errors import ConfigError

DEFAULTS: dict = {
    "glyphset": {
        "font": None,          # path to a user-supplied TTF/OTF
        "subset": None,        # optional first-N-characters restriction
        "em_px": 56,
        "min_coverage": 0.99,
    },
    "vce": {
        "latent_dim": 10,
        "beta": 8.0,
        "lr": 1e-4,
        "batch": 64,
        "steps": 50000,
        "log_every": 100,
        "seed": 0,
        "channels": [32, 32, 64, 64],
        "hidden": 256,
    },
    "augment": {
        "gamma": 2.0,
        "rate": 1.0,
        "p_wt": 0.1,
    },
    "corpus": {
        "root": None,
        "window": 80,
        "train": 0.72,
        "val": 0.08,
        "eval": 0.20,
        "seed": 0,
    },
    "clcnn": {
        "window": 80,
        "lr": 1e-4,
        "weight_decay": 1e-4,
        "batch": 256,
        "max_epochs": 200,
        "patience": 10,
        "augmentation": "none",  # none | ssa | wt
        "seed": 0,
        "channels": 512,
    },
    "service": {
        "port": 8307,
    },
}

_num = {"type": "number"}
_int = {"type": "integer", "minimum": 0}
_opt_str = {"type": ["string", "null"]}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "glyphset": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "font": _opt_str,
                "subset": {"type": ["integer", "null"], "minimum": 1},
                "em_px": {"type": "integer", "minimum": 8},
                "min_coverage": {"type": "number", "minimum": 0, "maximum": 1},
            },
        },
        "vce": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "latent_dim": {"type": "integer", "minimum": 1},
                "beta": {"type": "number", "minimum": 0},
                "lr": _num,
                "batch": {"type": "integer", "minimum": 1},
                "steps": {"type": "integer", "minimum": 1},
                "log_every": {"type": "integer", "minimum": 1},
                "seed": _int,
                "channels": {"type": "array", "items": {"type": "integer"},
                             "minItems": 4, "maxItems": 4},
                "hidden": {"type": "integer", "minimum": 1},
            },
        },
        "augment": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "gamma": {"type": "number", "minimum": 0},
                "rate": {"type": "number", "minimum": 0, "maximum": 1},
                "p_wt": {"type": "number", "minimum": 0, "maximum": 1},
            },
        },
        "corpus": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "root": _opt_str,
                "window": {"type": "integer", "minimum": 1},
                "train": _num,
                "val": _num,
                "eval": _num,
                "seed": _int,
            },
        },
        "clcnn": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "window": {"type": "integer", "minimum": 1},
                "lr": _num,
                "weight_decay": {"type": "number", "minimum": 0},
                "batch": {"type": "integer", "minimum": 1},
                "max_epochs": {"type": "integer", "minimum": 1},
                "patience": {"type": "integer", "minimum": 1},
                "augmentation": {"enum": ["none", "ssa", "wt"]},
                "seed": _int,
                "channels": {"type": "integer", "minimum": 1},
            },
        },
        "service": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "port": {"type": "integer", "minimum": 1, "maximum": 65535},
            },
        },
    },
}


def resolve(path=None, overrides: dict | None = None) -> dict:
    """Load, validate, and fill a config; overrides are (section, key, value)."""
    cfg = deepcopy(DEFAULTS)
    if path is not None:
        try:
            user = json.loads(Path(path).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"config file '{path}' not found") from None
        except json.JSONDecodeError as e:
            raise ConfigError(f"config file '{path}' is not valid JSON: {e}") from None
        try:
            jsonschema.validate(user, SCHEMA)
        except jsonschema.ValidationError as e:
            where = "/".join(str(p) for p in e.absolute_path) or "top level"
            raise ConfigError(f"config '{path}': {e.message} (at {where})") from None
        for section, values in user.items():
            cfg[section].update(values)
    if overrides:
        for (section, key), value in overrides.items():
            if value is not None:
                cfg[section][key] = value
    jsonschema.validate(cfg, SCHEMA)
    return cfg


def data_dir() -> Path:
    """Default artifact root (GEL_DATA_DIR or the working directory)."""
    return Path(os.environ.get("GEL_DATA_DIR", "."))


def write_snapshot(cfg: dict, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.snapshot.json").write_text(
        json.dumps(cfg, indent=2, sort_keys=True) + "\n", encoding="utf-8")
