"""Pipeline configuration with a flat ``key = value`` file format."""

from __future__ import annotations

import os
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Optional

WORKERS_ENV = "MESHTONE_WORKERS"


@dataclass(frozen=True)
class PipelineConfig:
    """Every tunable of the estimation and correction stages.

    Defaults follow the method where it states a value (``alpha``); the
    visibility thresholds and guards are local policy.
    """

    alpha: float = 0.3
    min_pixels: int = 5
    visibility_fraction: float = 0.75
    min_overlap: int = 3
    agreement_threshold: float = 0.0
    # faces with more owned pixels than this at the 1.0 ceiling are unobserved
    max_clipped_fraction: float = 0.3
    min_patch_mean: float = 1.0 / 255.0
    channels: str = "rgb"
    worker_count: int = 1
    dump_gains: bool = False
    dump_colors: bool = False
    dump_visibility: bool = False
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.alpha < 0.5:
            raise ValueError(f"alpha must lie in [0, 0.5), got {self.alpha}")
        if self.min_pixels < 1:
            raise ValueError("min_pixels must be at least 1")
        if not 0.0 <= self.visibility_fraction <= 1.0:
            raise ValueError("visibility_fraction must lie in [0, 1]")
        if self.min_overlap < 1:
            raise ValueError("min_overlap must be at least 1")
        if not 0.0 <= self.agreement_threshold <= 1.0:
            raise ValueError("agreement_threshold must lie in [0, 1]")
        if not 0.0 <= self.max_clipped_fraction <= 1.0:
            raise ValueError("max_clipped_fraction must lie in [0, 1]")
        if self.min_patch_mean < 0:
            raise ValueError("min_patch_mean must be non-negative")
        if self.channels not in ("rgb", "gray"):
            raise ValueError(f"channels must be 'rgb' or 'gray', got {self.channels!r}")
        if self.worker_count < 1:
            raise ValueError("worker_count must be at least 1")

    def to_text(self) -> str:
        return "".join(f"{f.name} = {_format(getattr(self, f.name))}\n" for f in fields(self))

    def save(self, path) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def from_text(cls, text: str) -> "PipelineConfig":
        return cls().updated(**parse_config_text(text))

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        return cls.from_text(Path(path).read_text())

    def updated(self, **overrides) -> "PipelineConfig":
        known = {f.name: f for f in fields(self)}
        values = {}
        for key, raw in overrides.items():
            if raw is None:
                continue
            if key not in known:
                raise ValueError(f"unknown config key {key!r}")
            values[key] = _coerce(getattr(self, key), raw, key)
        return replace(self, **values)


def parse_config_text(text: str) -> dict:
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = value
    return out


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _coerce(default, raw, key):
    if not isinstance(raw, str):
        return type(default)(raw) if not isinstance(default, bool) else bool(raw)
    if isinstance(default, bool):
        lowered = raw.lower()
        if lowered in ("1", "true", "yes", "on"):
            return True
        if lowered in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"config key {key!r}: not a boolean: {raw!r}")
    try:
        return type(default)(raw)
    except ValueError as exc:
        raise ValueError(f"config key {key!r}: cannot parse {raw!r}") from exc


def env_worker_count() -> Optional[int]:
    raw = os.environ.get(WORKERS_ENV)
    return int(raw) if raw else None
