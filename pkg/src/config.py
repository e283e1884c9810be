#!/usr/bin/env python3
"""
Configuration Module

Run configuration as a flat mapping: built-in defaults, overlaid by an
optional YAML file, overlaid by flags given on the command line.
"""

import logging
import os
from typing import Any, Dict, Mapping, Optional, Set, Union

import yaml

from .errors import ConfigError
from .optim import LrSchedule, cifar_schedule, constant_schedule, fer_schedule

logger = logging.getLogger(__name__)

DEFAULTS: Dict[str, Any] = {
    "scheme": "Logarithmic-8",
    "classes": 10,
    "batch_size": 128,
    "epochs": 180,
    "lr_schedule": "cifar",
    "seed": 0,
    "shortcut": True,
    "beta1": 0.9,
    "beta2": 0.999,
    "eps": 1e-8,
    "dataset": "cifar10",
    "data_dir": "data/cifar-10-batches-bin",
    "checkpoint_dir": "checkpoints",
    "format": "table",
}

DATASETS = ("cifar10", "synthetic")


def _check_types(config: Mapping[str, Any]) -> None:
    for key, default in DEFAULTS.items():
        value = config[key]
        if isinstance(default, bool):
            if not isinstance(value, bool):
                raise ConfigError(f"'{key}' must be true or false, got {value!r}")
        elif isinstance(default, int):
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigError(f"'{key}' must be an integer, got {value!r}")
        elif isinstance(default, float):
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(f"'{key}' must be a number, got {value!r}")
        elif not isinstance(value, str):
            raise ConfigError(f"'{key}' must be a string, got {value!r}")
    if config["dataset"] not in DATASETS:
        raise ConfigError(f"dataset must be one of {', '.join(DATASETS)}, got {config['dataset']!r}")
    for key in ("batch_size", "epochs"):
        if config[key] < 1:
            raise ConfigError(f"'{key}' must be >= 1, got {config[key]}")


def _read_document(path: str) -> Dict[str, Any]:
    """The YAML mapping at path with keys normalized to underscores."""
    if not os.path.isfile(path):
        raise ConfigError(f"config file not found: {path}")

    with open(path, "r") as f:
        try:
            document = yaml.safe_load(f)
        except yaml.YAMLError as e:
            raise ConfigError(f"{path}: invalid YAML: {e}") from e

    if document is None:
        document = {}
    if not isinstance(document, dict):
        raise ConfigError(f"{path}: top level must be a mapping, got {type(document).__name__}")

    values = {}
    for key, value in document.items():
        normalized = str(key).replace("-", "_")
        if normalized not in DEFAULTS:
            raise ConfigError(f"{path}: unknown configuration key '{key}'")
        values[normalized] = value
    return values


def load_config(path: Optional[str] = None) -> Dict[str, Any]:
    """Defaults overlaid with the YAML mapping at path, if given."""
    config = dict(DEFAULTS)
    if path is None:
        return config
    config.update(_read_document(path))
    _check_types(config)
    logger.debug("loaded configuration from %s", path)
    return config


def explicit_keys(path: Optional[str], args: Union[Mapping[str, Any], Any]) -> Set[str]:
    """Keys set by the config file or by a command-line flag rather than left at their default."""
    values = args if isinstance(args, Mapping) else vars(args)
    keys = {key for key in DEFAULTS if values.get(key) is not None}
    if path is not None:
        keys.update(_read_document(path))
    return keys


def merge_cli_overrides(config: Mapping[str, Any], args: Union[Mapping[str, Any], Any]) -> Dict[str, Any]:
    """Overlay every flag that was explicitly given (not None) onto config."""
    values = args if isinstance(args, Mapping) else vars(args)
    merged = dict(config)
    for key in DEFAULTS:
        if values.get(key) is not None:
            merged[key] = values[key]
    _check_types(merged)
    return merged


def parse_lr_schedule(text: str, epochs: int) -> LrSchedule:
    """Resolve "cifar", "fer" or "const:<rate>" into a schedule."""
    text = text.strip()
    if text == "cifar":
        return cifar_schedule()
    if text == "fer":
        return fer_schedule()
    if text.startswith("const:"):
        try:
            rate = float(text[len("const:"):])
        except ValueError:
            raise ConfigError(f"invalid constant learning rate in {text!r}")
        if rate <= 0 or epochs < 1:
            raise ConfigError(f"constant schedule needs rate > 0 and epochs >= 1, got {text!r}, {epochs}")
        return constant_schedule(rate, epochs)
    raise ConfigError(f"unknown learning-rate schedule {text!r} (expected cifar, fer or const:<rate>)")
