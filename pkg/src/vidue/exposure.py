"""Exposure-aware representation learning.

A compact ResNet-style extractor maps a window of blurred frames (temporal
and color dimensions folded together) to an embedding whose classes are the
exposure lengths.  Training uses a supervised contrastive objective whose
denominator weights each negative by the absolute difference in exposure
length, so same-exposure samples drop out of the denominator entirely.

Two baseline conditioners are provided: an ordinal-regression head over the
same embedding, and a direct encoder for the case where the exposure length
is known at inference time (upper bound).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .blocks import lrelu, res_stack
from .errors import ConfigError, NumericError


class DegenerateBatchError(NumericError):
    """A contrastive anchor has no positive or no weighted negative."""


class ExposureExtractor(nn.Module):
    """Window of T blurred frames -> embedding vector.

    conv7 stem, three stride-2 stages of BN residual blocks, global average
    pooling, then a two-layer head.  Widths are (w, 2w, 4w, 4w).
    """

    def __init__(self, window: int = 4, base_width: int = 64, embed_dim: int = 256):
        super().__init__()
        w = base_width
        widths = (w, 2 * w, 4 * w, 4 * w)
        self.window = window
        self.embed_dim = embed_dim

        def stage(cin, cout, stride):
            return nn.Sequential(
                nn.Conv2d(cin, cout, 7 if stride == 1 else 3, stride, 3 if stride == 1 else 1),
                nn.BatchNorm2d(cout),
                nn.LeakyReLU(0.1),
                res_stack(cout, 2, kernel_size=3, batch_norm=True),
            )

        self.stages = nn.Sequential(
            stage(window * 3, widths[0], 1),
            stage(widths[0], widths[1], 2),
            stage(widths[1], widths[2], 2),
            stage(widths[2], widths[3], 2),
        )
        self.head1 = nn.Linear(widths[3], 4 * widths[3])
        self.head2 = nn.Linear(4 * widths[3], embed_dim)

    def forward(self, y: torch.Tensor) -> torch.Tensor:
        if y.dim() != 4 or y.shape[1] != self.window * 3:
            raise ValueError(
                f"expected (N, {self.window * 3}, H, W) input, got {tuple(y.shape)}"
            )
        if min(y.shape[2], y.shape[3]) < 8:
            raise ValueError("input too small for three stride-2 stages")
        h = self.stages(y)
        h = h.mean(dim=(2, 3))
        return self.head2(lrelu(self.head1(h)))


def extract(y: torch.Tensor, extractor: ExposureExtractor) -> torch.Tensor:
    """Embed a single (T, 3, H, W) window; returns a 1-D vector."""
    return extractor(y.reshape(1, -1, *y.shape[-2:]))[0]


def weighted_supcon_loss(
    embeddings: torch.Tensor,
    labels: torch.Tensor,
    alpha: float = 0.5,
    normalize: bool = True,
    per_anchor: bool = False,
    guard: float = 1e-12,
) -> torch.Tensor:
    """Supervised contrastive loss with exposure-difference weighting.

    Every sample acts as an anchor; its positives are the other samples with
    the same exposure label.  Each denominator term is weighted by
    |label_anchor - label_other|, which zeroes out same-exposure samples
    (including the anchor itself).  Returns the sum over anchors, or the
    per-anchor vector when ``per_anchor`` is set.
    """
    if alpha <= 0:
        raise ConfigError(f"temperature must be positive, got {alpha}")
    if embeddings.dim() != 2 or embeddings.shape[0] != labels.shape[0]:
        raise ValueError("embeddings must be (N, C) aligned with labels (N,)")
    e = F.normalize(embeddings, dim=1) if normalize else embeddings
    lab = labels.to(e.dtype)
    sim = (e @ e.T) / alpha                                  # (N, N)
    weights = (lab[:, None] - lab[None, :]).abs()            # zero on diagonal
    pos = (labels[:, None] == labels[None, :]) & ~torch.eye(
        len(labels), dtype=torch.bool, device=labels.device
    )
    n_pos = pos.sum(dim=1)
    if (n_pos == 0).any():
        raise DegenerateBatchError("an anchor has no positive sample")
    denom = (weights * torch.exp(sim)).sum(dim=1)
    if (denom <= 0).any():
        raise DegenerateBatchError("an anchor has zero denominator weight mass")
    log_prob = sim - torch.log(denom + guard)[:, None]
    anchor_terms = -(pos * log_prob).sum(dim=1) / n_pos
    return anchor_terms if per_anchor else anchor_terms.sum()


class OrdinalHead(nn.Module):
    """Linear map from embeddings to shutter-1 threshold logits."""

    def __init__(self, embed_dim: int, shutter: int):
        super().__init__()
        self.shutter = shutter
        self.linear = nn.Linear(embed_dim, shutter - 1)

    def forward(self, embeddings: torch.Tensor) -> torch.Tensor:
        return self.linear(embeddings)


def ordinal_targets(labels: torch.Tensor, shutter: int) -> torch.Tensor:
    """Binary targets 1[label > k] for thresholds k = 1 .. shutter-1."""
    if ((labels < 1) | (labels > shutter)).any():
        raise ValueError(f"labels must lie in [1, {shutter}]")
    ks = torch.arange(1, shutter, device=labels.device)
    return (labels[:, None] > ks[None, :]).to(torch.float32)


def ordinal_regression_loss(
    embeddings: torch.Tensor, labels: torch.Tensor, head: OrdinalHead
) -> torch.Tensor:
    """Sum over thresholds of binary cross-entropies, averaged over the batch."""
    logits = head(embeddings)
    targets = ordinal_targets(labels, head.shutter).to(logits.dtype)
    return F.binary_cross_entropy_with_logits(logits, targets, reduction="none").sum(1).mean()


def binary_exposure_vector(exposure: int, shutter: int) -> torch.Tensor:
    """Length-``shutter`` vector with the first ``exposure`` entries one."""
    if not 1 <= exposure <= shutter:
        raise ConfigError(f"exposure must lie in [1, {shutter}], got {exposure}")
    v = torch.zeros(shutter)
    v[:exposure] = 1.0
    return v


class KnownExposureEncoder(nn.Module):
    """Embed a known exposure length via its binary step vector and two FC
    layers; stands in for the learned extractor as an oracle upper bound."""

    def __init__(self, shutter: int, embed_dim: int = 256):
        super().__init__()
        self.shutter = shutter
        self.fc1 = nn.Linear(shutter, embed_dim)
        self.fc2 = nn.Linear(embed_dim, embed_dim)

    def forward(self, exposures: torch.Tensor) -> torch.Tensor:
        # exposures: (N,) integer exposure lengths
        vecs = torch.stack(
            [binary_exposure_vector(int(e), self.shutter) for e in exposures]
        ).to(self.fc1.weight.dtype)
        return self.fc2(lrelu(self.fc1(vecs)))


def encode_known_exposure(
    exposure: int, shutter: int, encoder: KnownExposureEncoder
) -> torch.Tensor:
    if shutter != encoder.shutter:
        raise ConfigError(f"encoder built for shutter {encoder.shutter}, got {shutter}")
    return encoder(torch.tensor([exposure]))[0]


# ---------------------------------------------------------------------------
# Contrastive training


@dataclass
class ExposureTrainResult:
    extractor: ExposureExtractor
    losses: list = field(default_factory=list)


def train_extractor(
    dataset,
    config,
    log=None,
    extractor: ExposureExtractor | None = None,
) -> ExposureTrainResult:
    """Optimize the extractor with the weighted contrastive objective.

    ``dataset`` must provide ``contrastive_batch(rng, pairs, crop)`` yielding
    a (2*pairs, T*3, h, w) view tensor and its (2*pairs,) exposure labels,
    with at least two distinct labels per batch.  The returned extractor is
    meant to be frozen afterwards.
    """
    from .training import seed_everything  # local import to avoid a cycle

    seed_everything(config.seed)
    rng = np.random.default_rng(config.seed)
    if extractor is None:
        extractor = ExposureExtractor(
            window=config.model.window,
            base_width=config.model.extractor_width,
            embed_dim=config.model.embed_dim,
        )
    extractor.train()
    opt = torch.optim.Adam(extractor.parameters(), lr=config.lr)
    result = ExposureTrainResult(extractor=extractor)
    t0 = time.monotonic()
    steps = config.epochs * config.steps_per_epoch
    for step in range(steps):
        views, labels = dataset.contrastive_batch(rng, config.batch // 2, config.crop)
        emb = extractor(views)
        loss = weighted_supcon_loss(
            emb, labels, alpha=config.alpha, normalize=config.normalize_embeddings
        )
        if not torch.isfinite(loss):
            raise NumericError(f"non-finite contrastive loss at step {step}")
        opt.zero_grad()
        loss.backward()
        opt.step()
        result.losses.append(float(loss))
        if log is not None:
            log(
                {
                    "stage": "exposure",
                    "step": step,
                    "loss": float(loss),
                    "lr": opt.param_groups[0]["lr"],
                    "wall": time.monotonic() - t0,
                }
            )
    extractor.eval()
    for p in extractor.parameters():
        p.requires_grad_(False)
    return result
