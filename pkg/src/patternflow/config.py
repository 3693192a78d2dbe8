"""Run configuration: defaults, JSON config files, CLI flag overrides.

Precedence is flags > config file > defaults.  Section names in the JSON
file match the attribute names below; unknown sections or keys are errors
so typos surface instead of silently using defaults.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from .adaptation import AdaptationConfig
from .detection import DetectionConfig
from .io import read_json
from .matcher import MatcherConfig
from .supervision import SupervisionConfig
from .tracker import TrackerConfig


@dataclass
class SimulatorConfig:
    width: int = 128
    height: int = 128
    dot_count: int = 200
    min_spacing: float = 8.0
    sigma_psf: float = 1.2
    noise: float = 0.0
    dropout: float = 0.0
    v_max: float = 3.0
    frames: int = 64
    scene: str = "default"
    merge_radius: float = 5.0
    border_margin: float = 2.5

    def __post_init__(self):
        if self.width < 8 or self.height < 8 or self.dot_count < 1:
            raise ValueError("bad simulator dimensions")
        if self.min_spacing <= 0 or self.sigma_psf <= 0 or self.frames < 1:
            raise ValueError("bad simulator config")
        if not 0.0 <= self.dropout < 1.0 or self.noise < 0.0:
            raise ValueError("bad noise/dropout")


@dataclass
class InitConfig:
    """How the estimator grid starts: constant, GT plus corruption, or a file."""

    mode: str = "constant"   # constant | gt-offset | file
    value: float | None = None  # constant level; defaults to (d_min + d_max) / 2
    offset: float = 5.0      # gt-offset: additive bias, px
    noise: float = 1.5       # gt-offset: gaussian corruption sigma, px
    path: str | None = None  # file: PFM to load

    def __post_init__(self):
        if self.mode not in ("constant", "gt-offset", "file"):
            raise ValueError(f"unknown init mode {self.mode!r}")


@dataclass
class Config:
    seed: int = 0
    start_frame: int = 0
    max_frames: int | None = None
    simulator: SimulatorConfig = field(default_factory=SimulatorConfig)
    detection: DetectionConfig = field(default_factory=DetectionConfig)
    tracker: TrackerConfig = field(default_factory=TrackerConfig)
    matcher: MatcherConfig = field(default_factory=MatcherConfig)
    supervision: SupervisionConfig = field(default_factory=SupervisionConfig)
    adaptation: AdaptationConfig = field(default_factory=AdaptationConfig)
    init: InitConfig = field(default_factory=InitConfig)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def replace(self, **section_updates) -> "Config":
        """Copy with whole sections or scalar fields replaced."""
        return dataclasses.replace(self, **section_updates)


_SECTIONS = {
    "simulator": SimulatorConfig,
    "detection": DetectionConfig,
    "tracker": TrackerConfig,
    "matcher": MatcherConfig,
    "supervision": SupervisionConfig,
    "adaptation": AdaptationConfig,
    "init": InitConfig,
}
_SCALARS = ("seed", "start_frame", "max_frames")


def config_from_dict(data: dict) -> Config:
    """Build a Config from a (possibly partial) nested dict; typos are errors."""
    cfg = Config()
    updates: dict = {}
    for key, value in data.items():
        if key in _SCALARS:
            updates[key] = value
        elif key in _SECTIONS:
            section_cls = _SECTIONS[key]
            known = {f.name for f in dataclasses.fields(section_cls)}
            bad = set(value) - known
            if bad:
                raise ValueError(f"unknown key(s) {sorted(bad)} in section {key!r}")
            updates[key] = dataclasses.replace(getattr(cfg, key), **value)
        else:
            raise ValueError(f"unknown config section {key!r}")
    return dataclasses.replace(cfg, **updates)


def merge_dicts(base: dict, override: dict) -> dict:
    out = dict(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = merge_dicts(out[k], v)
        else:
            out[k] = v
    return out


def resolve_config(config_path: str | Path | None,
                   flag_overrides: dict) -> Config:
    """defaults <- config file <- explicit CLI flags, in that order."""
    layers: dict = {}
    if config_path is not None:
        layers = merge_dicts(layers, read_json(config_path))
    layers = merge_dicts(layers, flag_overrides)
    return config_from_dict(layers)
