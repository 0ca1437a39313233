"""Codec configuration: defaults, config-file parsing, flag precedence.

Config files are plain ``key=value`` lines ('#' starts a comment). Precedence
is flags > config file > defaults; the ``FGVC_SEED`` environment variable
replaces the seed unless an explicit --seed flag was given.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, fields
from pathlib import Path

from .errors import ConfigError


@dataclass
class CodecConfig:
    gop_len: int = 48
    overlap: int = 4
    s: int = 4
    d: int = 8
    gamma: float = 0.5
    T: int = 512
    beta_start: float = 1e-4
    beta_end: float = 0.02
    chunk_size: int = 16
    kl_cap: float = 4.0
    base_seed: int = 0
    prior: str = "power-law"          # or "fitted"
    prior_amplitude: float = 1.0
    prior_exponent: float = 2.0
    t_star: int = 256
    target_quality: float | None = None
    eps: float = 0.005
    M: int = 4
    max_iters: int = 10
    metric_scales: int = 5


_FIELD_TYPES = {f.name: f.type for f in fields(CodecConfig)}
_PRIORS = ("power-law", "fitted")


def _coerce(key: str, raw: str):
    base = CodecConfig()
    current = getattr(base, key)
    if key == "target_quality":
        return None if raw.lower() in ("none", "") else float(raw)
    if key == "prior":
        if raw not in _PRIORS:
            raise ConfigError(f"prior must be one of {_PRIORS}, got {raw!r}")
        return raw
    try:
        if isinstance(current, bool):
            return raw.lower() in ("1", "true", "yes", "on")
        if isinstance(current, int):
            return int(raw)
        if isinstance(current, float):
            return float(raw)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {raw!r}") from exc
    return raw


def parse_config_file(path) -> dict:
    out = {}
    text = Path(path).read_text()
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in _FIELD_TYPES:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        out[key] = _coerce(key, value.strip())
    return out


def build_config(config_path=None, flag_overrides: dict | None = None,
                 seed_flag_given: bool = False) -> CodecConfig:
    values = {}
    if config_path is not None:
        values.update(parse_config_file(config_path))
    if flag_overrides:
        values.update({k: v for k, v in flag_overrides.items() if v is not None})
    env_seed = os.environ.get("FGVC_SEED")
    if env_seed is not None and not seed_flag_given:
        try:
            values["base_seed"] = int(env_seed)
        except ValueError as exc:
            raise ConfigError(f"FGVC_SEED must be an integer, got {env_seed!r}") from exc
    cfg = CodecConfig()
    for key, val in values.items():
        if not hasattr(cfg, key):
            raise ConfigError(f"unknown config key {key!r}")
        setattr(cfg, key, val)
    return cfg
