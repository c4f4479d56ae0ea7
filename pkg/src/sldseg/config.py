"""Flat key-value configuration files for fits and synthetic-data specs.

Format: UTF-8 text, one `key = value` per line, `#` starts a comment,
blank lines ignored.  Unknown keys are errors.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConfigError
from .model import Hyperparameters
from .synth import SynthSpec, generate_spec

_HP_FLOAT_KEYS = {
    "gamma", "alpha0", "alpha", "kappa", "zeta", "eta",
    "a_sigma", "b_sigma", "b_mu", "a_obs", "b_obs",
    "a_alpha_prior", "b_alpha_prior", "u_kappa_prior", "v_kappa_prior",
}
_HP_INT_KEYS = {"trunc_k", "dim_x", "dim_z"}
_HP_BOOL_KEYS = {"update_concentrations"}
_RUN_KEYS = {"rescale_mode", "channel_scales"}

_SYNTH_INT_KEYS = {"n_modes", "n_steps", "n_sequences", "dim_x", "dim_z", "seed"}
_SYNTH_FLOAT_KEYS = {"dwell_mean", "separation"}


@dataclass(frozen=True)
class RunConfig:
    """Data-handling options that ride along with the hyperparameters."""

    rescale_mode: str = "unit_variance"           # or "explicit"
    channel_scales: Optional[np.ndarray] = None


def parse_kv_file(path: str) -> dict[str, str]:
    pairs: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, value = line.split("=", 1)
            key = key.strip()
            value = value.strip()
            if not key or not value:
                raise ConfigError(f"{path}:{lineno}: empty key or value")
            if key in pairs:
                raise ConfigError(f"{path}:{lineno}: duplicate key '{key}'")
            pairs[key] = value
    return pairs


def _parse_bool(value: str, key: str, path: str) -> bool:
    low = value.lower()
    if low in ("true", "1", "yes"):
        return True
    if low in ("false", "0", "no"):
        return False
    raise ConfigError(f"{path}: {key} must be a boolean, got '{value}'")


def _parse_float(value: str, key: str, path: str) -> float:
    try:
        return float(value)
    except ValueError:
        raise ConfigError(f"{path}: {key} must be numeric, got '{value}'") from None


def _parse_int(value: str, key: str, path: str) -> int:
    try:
        return int(value)
    except ValueError:
        raise ConfigError(f"{path}: {key} must be an integer, got '{value}'") from None


def load_config(path: str, dim_z: Optional[int] = None) -> tuple[Hyperparameters, RunConfig]:
    """Read hyperparameters and run options; `dim_z` from data fills any gap."""
    pairs = parse_kv_file(path)
    hp_kwargs: dict = {}
    run_kwargs: dict = {}
    for key, value in pairs.items():
        if key in _HP_FLOAT_KEYS:
            hp_kwargs[key] = _parse_float(value, key, path)
        elif key in _HP_INT_KEYS:
            hp_kwargs[key] = _parse_int(value, key, path)
        elif key in _HP_BOOL_KEYS:
            hp_kwargs[key] = _parse_bool(value, key, path)
        elif key == "rescale_mode":
            if value not in ("unit_variance", "explicit"):
                raise ConfigError(f"{path}: rescale_mode must be unit_variance or explicit")
            run_kwargs[key] = value
        elif key == "channel_scales":
            try:
                run_kwargs[key] = np.array([float(v) for v in value.split(",")])
            except ValueError:
                raise ConfigError(f"{path}: channel_scales must be comma-separated numbers") from None
        else:
            raise ConfigError(f"{path}: unknown key '{key}'")
    if "dim_z" not in hp_kwargs:
        if dim_z is None:
            raise ConfigError(f"{path}: dim_z missing and no data to infer it from")
        hp_kwargs["dim_z"] = dim_z
    run = RunConfig(**run_kwargs)
    if run.rescale_mode == "explicit" and run.channel_scales is None:
        raise ConfigError(f"{path}: rescale_mode=explicit requires channel_scales")
    return Hyperparameters(**hp_kwargs), run


def default_config(dim_z: int) -> tuple[Hyperparameters, RunConfig]:
    return Hyperparameters(dim_z=dim_z), RunConfig()


def load_synth_spec(path: str) -> SynthSpec:
    """Read a synthetic-data spec; mode parameters come from the deterministic generator."""
    pairs = parse_kv_file(path)
    kwargs: dict = {}
    for key, value in pairs.items():
        if key in _SYNTH_INT_KEYS:
            kwargs[key] = _parse_int(value, key, path)
        elif key in _SYNTH_FLOAT_KEYS:
            kwargs[key] = _parse_float(value, key, path)
        else:
            raise ConfigError(f"{path}: unknown key '{key}'")
    if "n_modes" not in kwargs:
        raise ConfigError(f"{path}: n_modes is required")
    return generate_spec(**kwargs)
