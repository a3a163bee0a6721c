"""Two-stage training orchestration: contrastive training of the exposure
extractor, then joint MAE training of the motion analyzer and reconstruction
network with the extractor frozen."""

from __future__ import annotations

import random
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .config import TrainConfig
from .degradation import ExposureConfig, Sample, SequenceLibrary
from .errors import ConfigError, DataError, NumericError
from .model import RestorationModel


def seed_everything(seed: int) -> None:
    random.seed(seed)
    np.random.seed(seed % 2**32)
    torch.manual_seed(seed)


def mae_loss(pred: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """Mean absolute error over all elements."""
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {tuple(pred.shape)} vs {tuple(target.shape)}")
    return (pred - target).abs().mean()


# ---------------------------------------------------------------------------
# Label-preserving augmentation


@dataclass(frozen=True)
class AugmentParams:
    hflip: bool
    vflip: bool
    rot90: int      # quarter turns
    top: int
    left: int
    crop: int


def draw_augment(rng: np.random.Generator, height: int, width: int, crop: int) -> AugmentParams:
    if crop > height or crop > width:
        raise ConfigError(f"crop {crop} larger than frame {height}x{width}")
    return AugmentParams(
        hflip=bool(rng.integers(2)),
        vflip=bool(rng.integers(2)),
        rot90=int(rng.integers(4)),
        top=int(rng.integers(height - crop + 1)),
        left=int(rng.integers(width - crop + 1)),
        crop=crop,
    )


def apply_transform(frames: np.ndarray, params: AugmentParams) -> np.ndarray:
    """Apply crop/flip/rotate to a (F, 3, H, W) stack."""
    out = frames[
        ..., params.top : params.top + params.crop, params.left : params.left + params.crop
    ]
    if params.hflip:
        out = out[..., ::-1]
    if params.vflip:
        out = out[..., ::-1, :]
    if params.rot90:
        out = np.rot90(out, k=params.rot90, axes=(-2, -1))
    return np.ascontiguousarray(out)


def augment(sample: Sample, rng: np.random.Generator, crop: int | None = None) -> Sample:
    """Identical geometric transform applied to the blurred inputs and every
    sharp target, so exposure labels and correspondences are preserved."""
    h, w = sample.blurred.shape[-2:]
    params = draw_augment(rng, h, w, crop or min(h, w))
    return Sample(
        blurred=apply_transform(sample.blurred, params),
        sharp_targets=apply_transform(sample.sharp_targets, params),
        config=sample.config,
        source_id=sample.source_id,
        start_index=sample.start_index,
    )


# ---------------------------------------------------------------------------
# Window sampling


class WindowDataset:
    """Random blurred windows from a sequence library, for both stages.

    The exposure stage draws two independently augmented views of the same
    window (same exposure label); the joint stage draws augmented
    input/target pairs.  Exposures are sampled uniformly from ``exposures``.
    """

    def __init__(
        self,
        library: SequenceLibrary,
        shutter: int,
        window: int,
        exposures: tuple[int, ...] | None = None,
    ):
        self.library = library
        self.shutter = shutter
        self.window = window
        self.exposures = tuple(exposures or range(1, shutter + 1))
        if len(self.exposures) == 0:
            raise ConfigError("exposure set must not be empty")

    def _config(self, exposure: int) -> ExposureConfig:
        return ExposureConfig(shutter=self.shutter, exposure=exposure, window=self.window)

    def random_window(self, rng: np.random.Generator, exposure: int) -> Sample:
        return self.library.random_sample(rng, self._config(exposure))

    def contrastive_batch(self, rng: np.random.Generator, pairs: int, crop: int):
        """(2*pairs, T*3, crop, crop) views plus (2*pairs,) labels, with at
        least two distinct exposure classes per batch."""
        if pairs < 2:
            raise ConfigError("contrastive batches need at least two windows")
        if len(self.exposures) < 2:
            raise DataError("contrastive training needs at least two exposure classes")
        labels = [int(rng.choice(self.exposures)) for _ in range(pairs)]
        if len(set(labels)) < 2:  # stratify: force a second class in
            others = [e for e in self.exposures if e != labels[0]]
            labels[-1] = int(rng.choice(others))
        views, out_labels = [], []
        for label in labels:
            sample = self.random_window(rng, label)
            h, w = sample.blurred.shape[-2:]
            for _ in range(2):
                params = draw_augment(rng, h, w, crop)
                v = apply_transform(sample.blurred, params)
                views.append(v.reshape(-1, crop, crop))
                out_labels.append(label)
        return (
            torch.from_numpy(np.stack(views)),
            torch.tensor(out_labels, dtype=torch.long),
        )

    def joint_batch(self, rng: np.random.Generator, batch: int, crop: int):
        """Augmented (inputs (B,T,3,c,c), targets (B,S*T,3,c,c), labels)."""
        ins, tgts, labels = [], [], []
        for _ in range(batch):
            exposure = int(rng.choice(self.exposures))
            sample = augment(self.random_window(rng, exposure), rng, crop)
            ins.append(sample.blurred)
            tgts.append(sample.sharp_targets)
            labels.append(exposure)
        return (
            torch.from_numpy(np.stack(ins)),
            torch.from_numpy(np.stack(tgts)),
            torch.tensor(labels, dtype=torch.long),
        )

    def fixed_batch(self, seed: int, batch: int, crop: int):
        """Deterministic batch for validation / overfit regressions."""
        rng = np.random.default_rng(seed)
        return self.joint_batch(rng, batch, crop)


# ---------------------------------------------------------------------------
# Joint training


@dataclass
class JointTrainResult:
    model: RestorationModel
    train_losses: list = field(default_factory=list)
    val_losses: list = field(default_factory=list)
    lrs: list = field(default_factory=list)
    checkpoint_path: Path | None = None
    aborted: bool = False


def train_joint(
    dataset: WindowDataset,
    model: RestorationModel,
    config: TrainConfig,
    log=None,
    checkpoint_dir: str | Path | None = None,
) -> JointTrainResult:
    """Optimize the motion analyzer and reconstruction network by MAE with
    AdaMax-style adaptive descent; the exposure extractor never receives
    gradient.  The learning rate halves when validation MAE plateaus.  A
    non-finite loss aborts, keeping the last epoch checkpoint on disk.
    """
    from .checkpoint import save_model_checkpoint  # deferred to avoid a cycle

    seed_everything(config.seed)
    rng = np.random.default_rng(config.seed)
    model.freeze_extractor()
    model.train()
    if model.extractor is not None:
        model.extractor.eval()

    params = model.trainable_parameters()
    opt = torch.optim.Adamax(params, lr=config.lr, betas=(config.beta1, config.beta2))
    scheduler = torch.optim.lr_scheduler.ReduceLROnPlateau(
        opt,
        mode="min",
        factor=0.5,
        patience=config.patience,
        threshold=config.plateau_threshold,
        threshold_mode="abs",
    )
    val = dataset.fixed_batch(config.seed + 1, config.val_samples, config.crop)
    result = JointTrainResult(model=model)
    t0 = time.monotonic()
    step = 0
    for epoch in range(config.epochs):
        for _ in range(config.steps_per_epoch):
            y, x, _ = dataset.joint_batch(rng, config.batch, config.crop)
            pred = model(y)
            loss = mae_loss(pred, x)
            if not torch.isfinite(loss):
                result.aborted = True
                raise NumericError(
                    f"non-finite loss at step {step}; last checkpoint: {result.checkpoint_path}"
                )
            opt.zero_grad()
            loss.backward()
            opt.step()
            result.train_losses.append(float(loss))
            result.lrs.append(opt.param_groups[0]["lr"])
            if log is not None:
                log(
                    {
                        "stage": "joint",
                        "epoch": epoch,
                        "step": step,
                        "loss": float(loss),
                        "lr": opt.param_groups[0]["lr"],
                        "wall": time.monotonic() - t0,
                    }
                )
            step += 1
        model.eval()
        with torch.no_grad():
            val_loss = float(mae_loss(model(val[0]), val[1]))
        model.train()
        if model.extractor is not None:
            model.extractor.eval()
        result.val_losses.append(val_loss)
        scheduler.step(val_loss)
        if log is not None:
            log({"stage": "joint", "epoch": epoch, "val_loss": val_loss})
        if checkpoint_dir is not None:
            result.checkpoint_path = save_model_checkpoint(
                Path(checkpoint_dir) / "joint.ckpt", model, config, optimizer=opt
            )
    model.eval()
    return result
