"""Configuration types: model hyperparameters, scale presets, and helpers for
strict dict round-tripping used by checkpoints, manifests, and the CLI."""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError

EXPOSURE_MODES = ("contrastive", "known", "agnostic")


@dataclass(frozen=True)
class ModelSpec:
    """Everything needed to rebuild the full model deterministically."""

    shutter: int = 8
    window: int = 4
    embed_dim: int = 256
    extractor_width: int = 64
    recon_widths: tuple[int, int, int, int] = (64, 128, 256, 256)
    intra_width: int = 16
    inter_width: int = 32
    refine_width: int = 64
    econv_eps: float = 1e-5
    exposure_mode: str = "contrastive"   # contrastive | known | agnostic
    adapt_mode: str = "econv"            # econv | se | plain
    use_intra: bool = True
    use_inter: bool = True
    use_refine: bool = True

    def __post_init__(self):
        if self.exposure_mode not in EXPOSURE_MODES:
            raise ConfigError(f"unknown exposure_mode {self.exposure_mode!r}")
        if self.adapt_mode not in ("econv", "se", "plain"):
            raise ConfigError(f"unknown adapt_mode {self.adapt_mode!r}")
        if self.shutter < 1 or self.window < 1:
            raise ConfigError("shutter and window must be positive")


@dataclass(frozen=True)
class TrainConfig:
    """One training stage (exposure or joint) at a given scale preset."""

    stage: str = "joint"                 # exposure | joint
    preset: str = "paper"
    lr: float = 2e-4
    batch: int = 12
    epochs: int = 200
    steps_per_epoch: int = 1000
    beta1: float = 0.9
    beta2: float = 0.999
    patience: int = 5
    plateau_threshold: float = 1e-4
    seed: int = 0
    crop: int = 128
    alpha: float = 0.5
    normalize_embeddings: bool = True
    exposure_set: tuple[int, ...] = ()
    val_samples: int = 8
    model: ModelSpec = field(default_factory=ModelSpec)

    def __post_init__(self):
        if self.stage not in ("exposure", "joint"):
            raise ConfigError(f"unknown stage {self.stage!r}")
        if self.lr <= 0:
            raise ConfigError("lr must be positive")
        if self.batch < 2:
            raise ConfigError("batch must be >= 2")
        if self.stage == "exposure" and self.batch % 2:
            raise ConfigError("exposure stage batch must be even (two views per window)")
        if not self.exposure_set:
            object.__setattr__(
                self, "exposure_set", tuple(range(1, self.model.shutter + 1))
            )
        for e in self.exposure_set:
            if not 1 <= e <= self.model.shutter:
                raise ConfigError(f"exposure {e} outside [1, {self.model.shutter}]")


def model_preset(name: str, **overrides) -> ModelSpec:
    """Named scale presets: `paper` at full size, `small`/`micro` shrink
    channel widths and operating resolution for desk machines."""
    base = {
        "paper": dict(),
        "small": dict(
            embed_dim=256,
            extractor_width=16,
            recon_widths=(16, 32, 64, 64),
            intra_width=4,
            inter_width=8,
            refine_width=16,
        ),
        "micro": dict(
            shutter=4,
            window=2,
            embed_dim=64,
            extractor_width=8,
            recon_widths=(8, 16, 32, 32),
            intra_width=2,
            inter_width=4,
            refine_width=8,
        ),
    }
    if name not in base:
        raise ConfigError(f"unknown preset {name!r} (expected paper, small, or micro)")
    params = dict(base[name])
    params.update(overrides)
    return ModelSpec(**params)


def train_preset(name: str, stage: str, **overrides) -> TrainConfig:
    defaults = {
        ("paper", "exposure"): dict(lr=0.1, batch=40, epochs=200, steps_per_epoch=1000, crop=128),
        ("paper", "joint"): dict(lr=2e-4, batch=12, epochs=200, steps_per_epoch=1000, crop=128),
        ("small", "exposure"): dict(lr=1e-3, batch=16, epochs=4, steps_per_epoch=100, crop=64),
        ("small", "joint"): dict(lr=5e-4, batch=4, epochs=6, steps_per_epoch=100, crop=64),
        ("micro", "exposure"): dict(lr=1e-3, batch=16, epochs=3, steps_per_epoch=100, crop=32),
        ("micro", "joint"): dict(lr=1e-3, batch=4, epochs=5, steps_per_epoch=100, crop=32),
    }
    key = (name, stage)
    if key not in defaults:
        raise ConfigError(f"unknown preset/stage {key}")
    model_over = overrides.pop("model", None)
    params = dict(defaults[key])
    params.update(overrides)
    model = model_over if model_over is not None else model_preset(name)
    return TrainConfig(stage=stage, preset=name, model=model, **params)


# ---------------------------------------------------------------------------
# Strict dict round-tripping


def to_dict(obj) -> dict:
    d = dataclasses.asdict(obj)

    def norm(v):
        if isinstance(v, tuple):
            return [norm(x) for x in v]
        if isinstance(v, list):
            return [norm(x) for x in v]
        if isinstance(v, dict):
            return {k: norm(x) for k, x in v.items()}
        return v

    return norm(d)


def from_dict(cls, data: dict):
    """Rebuild a (possibly nested) config dataclass, rejecting unknown keys."""
    if not isinstance(data, dict):
        raise ConfigError(f"expected a mapping for {cls.__name__}, got {type(data).__name__}")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(fields)
    if unknown:
        raise ConfigError(f"unknown keys for {cls.__name__}: {sorted(unknown)}")
    kwargs = {}
    for name, value in data.items():
        f = fields[name]
        if dataclasses.is_dataclass(f.type) or f.type in (ModelSpec, TrainConfig):
            kwargs[name] = from_dict(f.type, value)
        elif name == "model":
            kwargs[name] = from_dict(ModelSpec, value)
        elif isinstance(value, list):
            kwargs[name] = tuple(value)
        else:
            kwargs[name] = value
    return cls(**kwargs)


def load_config_file(path: str | Path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} not found")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    return data


def env_seed(default: int) -> int:
    """VIDUE_SEED overrides any configured seed."""
    raw = os.environ.get("VIDUE_SEED")
    if raw is None:
        return default
    try:
        return int(raw)
    except ValueError as exc:
        raise ConfigError(f"VIDUE_SEED must be an integer, got {raw!r}") from exc
