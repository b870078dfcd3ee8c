"""JSON experiment configuration: schema validation and conversion to library objects.

Every section is optional; missing keys take the library defaults. Unknown
keys are rejected by the schema.
"""

from __future__ import annotations

import json
from functools import lru_cache
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .denoise import default_sigma_grid
from .metrics import TvParams
from .model import Architecture
from .noise import AnnealSchedule
from .training import TrainingConfig

DEFAULT_SHAPES = ("sphere:0,0,0,1", "plane:0,0,1,0")


class ConfigError(ValueError):
    pass


@lru_cache(maxsize=None)
def load_schema(name: str) -> dict:
    """One of the schemas shipped in ``n2s3/schemas``, e.g. ``"config"``."""
    text = resources.files("n2s3").joinpath("schemas", f"{name}.schema.json").read_text()
    return json.loads(text)


def validate(doc, schema_name: str) -> None:
    validator = jsonschema.Draft202012Validator(load_schema(schema_name))
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        where = "/".join(str(p) for p in e.absolute_path) or "<root>"
        raise ConfigError(f"{schema_name}: {where}: {e.message}")


def load_config(path=None) -> dict:
    if path is None:
        return {}
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from None
    validate(doc, "config")
    return doc


def architecture_from(cfg: dict) -> Architecture:
    return Architecture(**cfg.get("architecture", {}))


def training_from(cfg: dict, seed: int = 0) -> TrainingConfig:
    t = dict(cfg.get("training", {}))
    t.pop("inputs", None)
    epochs = t.pop("epochs", TrainingConfig.epochs)
    sigma_max = t.pop("sigma_max", AnnealSchedule.sigma_max)
    sigma_min = t.pop("sigma_min", AnnealSchedule.sigma_min)
    return TrainingConfig(epochs=epochs, anneal=AnnealSchedule(sigma_max, sigma_min, epochs),
                          seed=seed, **t)


def tv_from(cfg: dict) -> TvParams:
    return TvParams(**cfg.get("tv", {}))


def sigma_grid_from(cfg: dict) -> np.ndarray:
    grid = cfg.get("sigma_grid")
    if grid is None:
        return default_sigma_grid()
    if isinstance(grid, dict):
        return default_sigma_grid(grid["n"], grid["lo"], grid["hi"])
    return np.asarray(grid, dtype=np.float64)


def dataset_from(cfg: dict) -> dict:
    d = cfg.get("dataset", {})
    return {"shapes": list(d.get("shapes", DEFAULT_SHAPES)),
            "points_per_shape": d.get("points_per_shape", 2000),
            "noise_levels": list(d.get("noise_levels", [0.02])),
            "copies": d.get("copies", 1)}
