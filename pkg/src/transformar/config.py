"""Flat ``key = value`` configuration files for :class:`TrainConfig`."""

from __future__ import annotations

import dataclasses
import typing
from pathlib import Path

from .encoder import PROFILES
from .errors import ConfigError
from .training.trainer import TrainConfig

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _field_types() -> dict[str, type]:
    hints = typing.get_type_hints(TrainConfig)
    return {f.name: hints[f.name] for f in dataclasses.fields(TrainConfig)}


def coerce(key: str, raw: str):
    """Convert ``raw`` text to the declared type of TrainConfig field ``key``."""
    types = _field_types()
    if key not in types:
        raise ConfigError(f"unknown config key {key!r}")
    kind = types[key]
    text = raw.strip()
    try:
        if kind is bool:
            low = text.lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError(text)
        if kind is int:
            return int(text)
        if kind is float:
            return float(text)
    except ValueError:
        raise ConfigError(f"config key {key!r}: cannot read {raw!r} as {kind.__name__}") from None
    return text


def parse_config_text(text: str, source: str = "<config>") -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment, blank lines are skipped."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key = value, got {line!r}")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key == "profile":
            values.update(profile_values(raw))
            continue
        try:
            values[key] = coerce(key, raw)
        except ConfigError as exc:
            raise ConfigError(f"{source}:{lineno}: {exc}") from None
    return values


def profile_values(name: str) -> dict:
    """Encoder fields of a named size profile (``desk``, ``tiny``, ``dino-s16``)."""
    if name not in PROFILES:
        raise ConfigError(f"unknown profile {name!r}; choose from {', '.join(PROFILES)}")
    enc = PROFILES[name].to_dict()
    enc.pop("ln_eps")
    return enc


def load_config(path=None, overrides: dict | None = None) -> TrainConfig:
    """Build a TrainConfig from an optional file plus ``overrides`` (already typed or raw strings)."""
    values = {}
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {p}")
        values.update(parse_config_text(p.read_text(), str(p)))
    for key, val in (overrides or {}).items():
        if key == "profile":
            values.update(profile_values(val))
        else:
            values[key] = coerce(key, val) if isinstance(val, str) else val
    return TrainConfig.from_dict(values)


def dump_config(cfg: TrainConfig) -> str:
    return "".join(f"{k} = {v}\n" for k, v in cfg.to_dict().items())
