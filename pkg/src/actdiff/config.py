"""Experiment configuration: a flat, commented ``key = value`` text format.

Blank lines and ``#`` comments are ignored; every other line must be
``key = value`` with a key from ExperimentConfig. Values are parsed by the
field's type; ``clip_x0`` additionally accepts ``none`` to disable clipping.
Unknown keys, duplicate keys, and malformed lines raise ConfigError with
the offending line number.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path

from .exceptions import ConfigError
from .guidance import PARAMETERIZATIONS
from .truncation import NORM_SOURCES
from .diffusion import SAMPLERS

ROLLOUT_MODES = ("short", "long")


@dataclass(frozen=True)
class ExperimentConfig:
    """Every knob of the data/train/evaluate pipeline in one place.

    mean_action_norm is the truncation schedule's center; leave it at 0 to
    have it computed from the training split at evaluation time.
    """

    seed: int = 0
    output_dir: str = "out"
    workers: int = 1
    train_episodes: int = 2000
    val_episodes: int = 100
    test_episodes: int = 200
    long_test_episodes: int = 50
    episode_steps: int = 15
    long_passes: int = 3
    timesteps: int = 100
    beta_start: float = 1e-4
    beta_end: float = 0.02
    sampler: str = "deterministic"
    clip_x0: float | None = 3.0
    train_steps: int = 20000
    batch_size: int = 64
    learning_rate: float = 1e-3
    guidance_scale: float = 1.0
    guidance_active_fraction: float = 0.5
    guidance_parameterization: str = "conditional_anchor"
    truncation_min: float = 0.5
    truncation_max: float = 1.5
    mean_action_norm: float = 0.0
    truncation_norm_source: str = "episode_mean"
    rollout_mode: str = "short"
    dump_episodes: int = 2

    def __post_init__(self):
        positive = (
            "workers", "train_episodes", "val_episodes", "test_episodes",
            "long_test_episodes", "episode_steps", "long_passes", "timesteps",
            "train_steps", "batch_size", "dump_episodes",
        )
        for name in positive:
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if not 0.0 < self.beta_start <= self.beta_end < 1.0:
            raise ConfigError("need 0 < beta_start <= beta_end < 1")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if self.sampler not in SAMPLERS:
            raise ConfigError(f"sampler must be one of {SAMPLERS}")
        if self.clip_x0 is not None and self.clip_x0 <= 0:
            raise ConfigError("clip_x0 must be positive or none")
        if self.guidance_scale < 0:
            raise ConfigError("guidance_scale must be nonnegative")
        if not 0.0 < self.guidance_active_fraction <= 1.0:
            raise ConfigError("guidance_active_fraction must lie in (0, 1]")
        if self.guidance_parameterization not in PARAMETERIZATIONS:
            raise ConfigError(f"guidance_parameterization must be one of {PARAMETERIZATIONS}")
        if not 0.0 < self.truncation_min <= self.truncation_max:
            raise ConfigError("need 0 < truncation_min <= truncation_max")
        if self.mean_action_norm < 0:
            raise ConfigError("mean_action_norm must be nonnegative")
        if self.truncation_norm_source not in NORM_SOURCES:
            raise ConfigError(f"truncation_norm_source must be one of {NORM_SOURCES}")
        if self.rollout_mode not in ROLLOUT_MODES:
            raise ConfigError(f"rollout_mode must be one of {ROLLOUT_MODES}")


_FIELD_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}


def _parse_value(key: str, raw: str, lineno: int):
    kind = _FIELD_TYPES[key]
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "float | None":
            return None if raw.lower() == "none" else float(raw)
        return raw
    except ValueError as exc:
        raise ConfigError(f"line {lineno}: bad value for {key}: {raw!r}") from exc


def parse_config_text(text: str) -> ExperimentConfig:
    """Parse config text into an ExperimentConfig, validating as it goes."""
    seen: dict[str, object] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line.rstrip()!r}")
        key, raw = (part.strip() for part in stripped.split("=", 1))
        if key not in _FIELD_TYPES:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in seen:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        seen[key] = _parse_value(key, raw, lineno)
    return ExperimentConfig(**seen)


def parse_config(path) -> ExperimentConfig:
    """Read and parse a config file."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    return parse_config_text(text)


def write_config(cfg: ExperimentConfig, path) -> None:
    """Write a config file that parses back to an identical config."""
    lines = ["# experiment configuration"]
    for f in fields(ExperimentConfig):
        value = getattr(cfg, f.name)
        if value is None:
            value = "none"
        lines.append(f"{f.name} = {value}")
    Path(path).write_text("\n".join(lines) + "\n")


@dataclass(frozen=True)
class ArtifactPaths:
    """Canonical locations of pipeline artifacts under one output dir."""

    root: Path

    def __init__(self, root):
        object.__setattr__(self, "root", Path(root))

    @property
    def train_data(self) -> Path:
        return self.root / "train.bin"

    @property
    def val_data(self) -> Path:
        return self.root / "val.bin"

    @property
    def test_data(self) -> Path:
        return self.root / "test.bin"

    @property
    def long_test_data(self) -> Path:
        return self.root / "test_long.bin"

    @property
    def checkpoint(self) -> Path:
        return self.root / "checkpoint.bin"

    @property
    def loss_curve(self) -> Path:
        return self.root / "loss_curve.csv"

    @property
    def train_summary(self) -> Path:
        return self.root / "train_summary.json"

    def report_csv(self, kind: str) -> Path:
        return self.root / f"report_{kind}.csv"

    def report_json(self, kind: str) -> Path:
        return self.root / f"report_{kind}.json"

    @property
    def frames_dir(self) -> Path:
        return self.root / "frames"
