"""Run configuration files: one ``key = value`` per line.

Blank lines and lines starting with ``#`` are ignored. Every key belongs to
exactly one of the model, training or data sections; anything else is an
error that names the key. Lists are comma separated.
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field
from pathlib import Path

from gatraj.model import ModelConfig
from gatraj.training import TrainConfig

DATA_ROOT_ENV = "GATRAJ_DATA"


class ConfigError(ValueError):
    pass


@dataclass
class DataConfig:
    source: str = "junction"  # "junction" or "files"
    train_files: list = field(default_factory=list)
    test_files: list = field(default_factory=list)
    swap_xy: bool = False
    frame_stride: int = 1
    junction_train: int = 256
    junction_test: int = 100
    junction_exits: int = 3
    junction_noise: float = 0.05
    junction_agents: int = 1
    junction_seed: int = 0

    def __post_init__(self):
        if self.source not in ("junction", "files"):
            raise ConfigError(f"source must be 'junction' or 'files', got {self.source!r}")


@dataclass
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    data: DataConfig = field(default_factory=DataConfig)


_SECTIONS = {"model": ModelConfig, "train": TrainConfig, "data": DataConfig}


def _field_types():
    table = {}
    for section, cls in _SECTIONS.items():
        for f in dataclasses.fields(cls):
            table[f.name] = (section, f)
    return table


def _coerce(key, raw, f):
    kind = type(f.default) if f.default is not dataclasses.MISSING else list
    try:
        if kind is bool:
            low = raw.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return low in ("true", "1", "yes")
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        if kind is list:
            return [p.strip() for p in raw.split(",") if p.strip()]
        return raw
    except ValueError:
        raise ConfigError(f"bad value for {key!r}: {raw!r} (expected {kind.__name__})") from None


def parse_config(text, overrides=None) -> RunConfig:
    """Build a RunConfig from config text plus ``{key: value}`` overrides."""
    types = _field_types()
    values = {name: {} for name in _SECTIONS}
    items = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (p.strip() for p in line.split("=", 1))
        items.append((key, raw, lineno))
    for key, raw in (overrides or {}).items():
        items.append((key, str(raw), None))
    for key, raw, lineno in items:
        if key not in types:
            where = f"line {lineno}: " if lineno else ""
            raise ConfigError(f"{where}unknown config key {key!r}")
        section, f = types[key]
        values[section][key] = _coerce(key, raw, f)
    try:
        return RunConfig(*(cls(**values[name]) for name, cls in _SECTIONS.items()))
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def load_config(path, overrides=None) -> RunConfig:
    return parse_config(Path(path).read_text(), overrides)


def resolve_data_path(name):
    """Relative data paths are looked up under $GATRAJ_DATA when it is set."""
    p = Path(name)
    root = os.environ.get(DATA_ROOT_ENV)
    if not p.is_absolute() and root:
        p = Path(root) / p
    if not p.exists():
        raise FileNotFoundError(f"data file not found: {p}")
    return p


def format_config(cfg: RunConfig) -> str:
    lines = []
    for name in _SECTIONS:
        lines.append(f"# {name}")
        for key, value in dataclasses.asdict(getattr(cfg, name)).items():
            if isinstance(value, list):
                value = ", ".join(value)
            lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"
