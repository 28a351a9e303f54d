"""Training and run configuration with exhaustive schema validation."""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigurationError

SEED_ENV_VAR = "WOGMA_SEED"


@dataclass
class TrainConfig:
    """Model and optimisation settings.

    Defaults follow the reference operating point: Adam at lr 5e-5 with
    weight decay 5e-4 for 100 epochs, clip window tau = stride = 20, top-K
    divisor kappa = 8, pseudo-label thresholds 0.4 / 0.3, 6000-frame
    truncation/padding, LSTM hidden size 1024, one action class.
    """

    lr: float = 5e-5
    weight_decay: float = 5e-4
    epochs: int = 100
    kappa: int = 8
    theta_class: float = 0.4
    theta_score: float = 0.3
    tau: int = 20
    stride: int = 20
    max_frames: int = 6000
    hidden: int = 1024
    n_c: int = 1
    seed: int = 0
    batch_size: int = 1
    ablate_pseudo: bool = False
    ablate_local: bool = False
    ablate_longrange: bool = False
    # network widths (the reference leaves these open; desk-scale defaults)
    scales: int = 3
    gcn_channels: int = 32
    gcn_layers: int = 1
    feature_dim: int = 64
    conv_layers: int = 2
    conv_kernel: int = 3
    input_channels: int = 3

    def validate(self) -> "TrainConfig":
        for name in ("theta_class", "theta_score"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ConfigurationError(f"{name} must lie in [0, 1], got {value}")
        for name in ("tau", "stride", "kappa", "epochs", "max_frames", "hidden", "n_c",
                     "batch_size", "gcn_channels", "gcn_layers", "feature_dim", "conv_layers",
                     "input_channels"):
            value = getattr(self, name)
            if value < 1:
                raise ConfigurationError(f"{name} must be >= 1, got {value}")
        if self.scales < 0:
            raise ConfigurationError(f"scales must be >= 0, got {self.scales}")
        if self.conv_kernel % 2 == 0:
            raise ConfigurationError(f"conv_kernel must be odd, got {self.conv_kernel}")
        if self.max_frames < self.tau:
            raise ConfigurationError(
                f"max_frames ({self.max_frames}) must be >= tau ({self.tau})")
        if self.lr <= 0:
            raise ConfigurationError(f"lr must be positive, got {self.lr}")
        if self.weight_decay < 0:
            raise ConfigurationError(f"weight_decay must be >= 0, got {self.weight_decay}")
        return self


@dataclass
class RunConfig:
    """TrainConfig plus file locations and evaluation settings for the CLI."""

    train: TrainConfig = field(default_factory=TrainConfig)
    train_data: str = "train.jsonl"
    eval_data: str = "test.jsonl"
    out_dir: str = "out"
    eval_fractions: list[float] = field(
        default_factory=lambda: [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0])
    instance_threshold: float = 0.5

    def validate(self) -> "RunConfig":
        self.train.validate()
        if not 0.0 < self.instance_threshold < 1.0:
            raise ConfigurationError(
                f"instance_threshold must lie in (0, 1), got {self.instance_threshold}")
        for frac in self.eval_fractions:
            if not 0.0 < frac <= 1.0:
                raise ConfigurationError(f"eval fraction {frac} outside (0, 1]")
        return self


_TRAIN_FIELDS = {f.name for f in dataclasses.fields(TrainConfig)}
_RUN_FIELDS = {f.name for f in dataclasses.fields(RunConfig)} - {"train"}


def train_config_to_dict(cfg: TrainConfig) -> dict:
    return dataclasses.asdict(cfg)


def train_config_from_dict(data: dict) -> TrainConfig:
    unknown = set(data) - _TRAIN_FIELDS
    if unknown:
        raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
    try:
        return TrainConfig(**data).validate()
    except TypeError as exc:
        raise ConfigurationError(str(exc)) from exc


def run_config_from_dict(data: dict) -> RunConfig:
    """Build a RunConfig from a flat JSON object; unknown keys are rejected."""
    unknown = set(data) - _TRAIN_FIELDS - _RUN_FIELDS
    if unknown:
        raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
    train = train_config_from_dict({k: v for k, v in data.items() if k in _TRAIN_FIELDS})
    run_kwargs = {k: v for k, v in data.items() if k in _RUN_FIELDS}
    try:
        return RunConfig(train=train, **run_kwargs).validate()
    except TypeError as exc:
        raise ConfigurationError(str(exc)) from exc


def load_run_config(path) -> RunConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigurationError(f"cannot read config file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigurationError(f"config file {path} must hold a JSON object")
    return run_config_from_dict(raw)


def fallback_seed() -> int | None:
    """Seed from the WOGMA_SEED environment variable, if set."""
    raw = os.environ.get(SEED_ENV_VAR)
    if raw is None:
        return None
    try:
        return int(raw)
    except ValueError as exc:
        raise ConfigurationError(f"{SEED_ENV_VAR} must be an integer, got {raw!r}") from exc
