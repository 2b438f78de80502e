"""Run configuration: one JSON tree validated up front, one global seed."""

from __future__ import annotations

import copy
import hashlib
import json
from pathlib import Path

from .errors import ConfigurationError

DEFAULT_CONFIG: dict = {
    "seed": 0,
    "simulate": {
        "n_positive": 52,
        "n_negative": 38,
        "n_frames": 50,
        "swarm": {},       # SimConfig field overrides for the positive class
        "planktonic": {},  # and for the negative class
    },
    "preprocess": {
        "window": 10,
        "stride": 10,
    },
    "model": {
        "image_size": 500,
        "input_size": 96,
        "growth_rate": 12,
        "block_layers": [2, 2, 2],
        "init_channels": 16,
        "attention_enabled": True,
        "kappa": 0.1,
    },
    "train": {
        "train_fraction": 0.9,
        "epochs": 50,
        "batch_size": 32,
        "learning_rate": 1e-3,
        "patience": 10,
        "class_weighting": True,
    },
    "evaluate": {
        "threshold": 0.5,
        "grid_points": 101,
    },
}

# keys whose values are free-form SimConfig overrides
_OPEN_SUBTREES = {("simulate", "swarm"), ("simulate", "planktonic")}


def _merge(base: dict, override: dict, path: tuple = ()) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if key not in base:
            raise ConfigurationError(f"unknown config key {'.'.join(path + (key,))!r}")
        if isinstance(base[key], dict) and (path + (key,)) not in _OPEN_SUBTREES:
            if not isinstance(value, dict):
                raise ConfigurationError(
                    f"config key {'.'.join(path + (key,))!r} must be a table"
                )
            out[key] = _merge(base[key], value, path + (key,))
        else:
            out[key] = copy.deepcopy(value)
    return out


def load_run_config(path: Path | None = None, overrides: dict | None = None) -> dict:
    """Merge defaults <- config file <- explicit overrides, rejecting unknown keys."""
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    if path is not None:
        try:
            user = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"config file {path} is not valid JSON: {exc}")
        if not isinstance(user, dict):
            raise ConfigurationError(f"config file {path} must hold a JSON object")
        cfg = _merge(cfg, user)
    if overrides:
        cfg = _merge(cfg, overrides)
    return cfg


def derive_seed(global_seed: int, stage: str) -> int:
    """Stable per-stage seed fan-out from the single global seed."""
    digest = hashlib.sha256(f"{global_seed}/{stage}".encode()).digest()
    return int.from_bytes(digest[:4], "little")
