"""Full restoration model: exposure conditioning, motion analysis, and the
reconstruction network behind one forward pass, with reflect padding to the
stride-compatible grid at entry and cropping at exit."""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F

from .config import ModelSpec
from .errors import ConfigError
from .exposure import ExposureExtractor, KnownExposureEncoder
from .motion import MotionAnalyzer, MotionBundle
from .reconstruction import ReconstructionNet


class RestorationModel(nn.Module):
    """frames (B, T, 3, H, W) -> sharp frames (B, S*T, 3, H, W)."""

    def __init__(self, spec: ModelSpec):
        super().__init__()
        self.spec = spec
        self.extractor = (
            ExposureExtractor(
                window=spec.window,
                base_width=spec.extractor_width,
                embed_dim=spec.embed_dim,
            )
            if spec.exposure_mode == "contrastive"
            else None
        )
        self.known_encoder = (
            KnownExposureEncoder(spec.shutter, spec.embed_dim)
            if spec.exposure_mode == "known"
            else None
        )
        self.analyzer = MotionAnalyzer(
            embed_dim=spec.embed_dim,
            window=spec.window,
            shutter=spec.shutter,
            intra_width=spec.intra_width,
            inter_width=spec.inter_width,
            use_intra=spec.use_intra,
            use_inter=spec.use_inter,
        )
        self.reconstructor = ReconstructionNet(
            window=spec.window,
            shutter=spec.shutter,
            embed_dim=spec.embed_dim,
            widths=tuple(spec.recon_widths),
            refine_width=spec.refine_width,
            adapt_mode=spec.adapt_mode,
            use_refine=spec.use_refine,
            use_motion=spec.use_intra or spec.use_inter,
            eps=spec.econv_eps,
        )

    @property
    def n_outputs(self) -> int:
        return self.spec.shutter * self.spec.window

    def freeze_extractor(self):
        if self.extractor is not None:
            self.extractor.eval()
            for p in self.extractor.parameters():
                p.requires_grad_(False)

    def trainable_parameters(self):
        """Parameters updated during joint training (the extractor stays fixed)."""
        frozen = set()
        if self.extractor is not None:
            frozen = {id(p) for p in self.extractor.parameters()}
        return [p for p in self.parameters() if id(p) not in frozen]

    def embed(self, y_flat: torch.Tensor, known_exposure=None) -> torch.Tensor:
        mode = self.spec.exposure_mode
        if mode == "contrastive":
            return self.extractor(y_flat)
        if mode == "known":
            if known_exposure is None:
                raise ConfigError("known-exposure model needs an exposure value")
            exposures = torch.as_tensor(known_exposure).reshape(-1)
            if exposures.numel() == 1:
                exposures = exposures.expand(y_flat.shape[0])
            return self.known_encoder(exposures)
        return y_flat.new_ones(y_flat.shape[0], self.spec.embed_dim)

    def forward(
        self,
        frames: torch.Tensor,
        known_exposure=None,
        return_motion: bool = False,
    ):
        if frames.dim() != 5 or frames.shape[1] != self.spec.window or frames.shape[2] != 3:
            raise ValueError(
                f"expected (B, {self.spec.window}, 3, H, W) input, got {tuple(frames.shape)}"
            )
        b, t, _, h, w = frames.shape
        y = frames.reshape(b, t * 3, h, w)
        pad_h = (-h) % 8
        pad_w = (-w) % 8
        if pad_h or pad_w:
            y = F.pad(y, (0, pad_w, 0, pad_h), mode="reflect")
        u = self.embed(y, known_exposure=known_exposure)
        bundle = self.analyzer(y, u)
        out = self.reconstructor(y, u, bundle)
        if pad_h or pad_w:
            out = out[..., :h, :w]
            bundle = MotionBundle(
                o_start=bundle.o_start[..., :h, :w],
                o_end=bundle.o_end[..., :h, :w],
                m=bundle.m[..., :h, :w],
                n=bundle.n[..., :h, :w],
            )
        if return_motion:
            return out, bundle
        return out


def build_model(spec: ModelSpec) -> RestorationModel:
    return RestorationModel(spec)
