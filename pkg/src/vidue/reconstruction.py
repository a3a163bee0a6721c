"""Video reconstruction network: a 4-stage residual encoder and a 3-stage
decoder in which each stage applies exposure-adaptive convolution, refines
the motion maps at that scale, and accumulates per-timestamp image residuals
coarse-to-fine.  The output is one sharp frame per latent timestamp.
"""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F

from .blocks import (
    ChannelGain,
    ExposureAdaptiveConv2d,
    backward_warp,
    lrelu,
    res_stack,
    resize_map,
)
from .motion import MotionBundle

ADAPT_MODES = ("econv", "se", "plain")


class FeatureAdapter(nn.Module):
    """The per-stage conditioning block: exposure-adaptive convolution by
    default, or a squeeze-and-excitation / plain-conv stand-in for ablations."""

    def __init__(self, embed_dim: int, channels: int, mode: str = "econv", eps: float = 1e-5):
        super().__init__()
        if mode not in ADAPT_MODES:
            raise ValueError(f"unknown adapt mode {mode!r}")
        self.mode = mode
        if mode == "econv":
            self.econv = ExposureAdaptiveConv2d(embed_dim, channels, eps=eps)
        else:
            self.conv = nn.Conv2d(channels, channels, 3, 1, 1)
            if mode == "se":
                self.gain = ChannelGain(embed_dim, channels)

    def forward(self, z, u):
        if self.mode == "econv":
            return self.econv(z, u)
        if self.mode == "se":
            return self.conv(self.gain(z, u))
        return self.conv(z)


class IntraRefiner(nn.Module):
    """Gate maps from intra-motion maps and the stage feature:
    sigmoid(conv(cat(m, g)) + m), one channel per input frame."""

    def __init__(self, window: int, channels: int):
        super().__init__()
        self.conv = nn.Conv2d(window + channels, window, 3, 1, 1)

    def forward(self, m: torch.Tensor, g: torch.Tensor) -> torch.Tensor:
        if m.shape[-2:] != g.shape[-2:]:
            raise ValueError(f"spatial mismatch: maps {tuple(m.shape)}, feature {tuple(g.shape)}")
        return torch.sigmoid(self.conv(torch.cat([m, g], dim=1)) + m)


def refine_intra(m: torch.Tensor, g: torch.Tensor, refiner: IntraRefiner) -> torch.Tensor:
    return refiner(m, g)


class InterRefiner(nn.Module):
    """Blend re-estimated flows with the raw ones under the intra-motion
    gate: conv(adapt(n, u) * gate + n * (1 - gate)).  Each input frame's
    gate channel covers its ``shutter`` child timestamps."""

    def __init__(self, embed_dim: int, window: int, shutter: int, mode: str = "econv", eps: float = 1e-5):
        super().__init__()
        self.window = window
        self.shutter = shutter
        flow_ch = window * shutter * 2
        self.adapt = FeatureAdapter(embed_dim, flow_ch, mode=mode, eps=eps)
        self.conv = nn.Conv2d(flow_ch, flow_ch, 3, 1, 1)

    def forward(self, n: torch.Tensor, gate: torch.Tensor, u: torch.Tensor) -> torch.Tensor:
        b, c, h, w = n.shape
        k = self.window * self.shutter
        if c != k * 2:
            raise ValueError(f"expected {k * 2} flow channels, got {c}")
        if gate.shape[1] != self.window:
            raise ValueError(f"expected {self.window} gate channels, got {gate.shape[1]}")
        gk = gate.repeat_interleave(self.shutter, dim=1).unsqueeze(2)  # (B, K, 1, h, w)
        est = self.adapt(n, u).view(b, k, 2, h, w)
        blend = est * gk + n.view(b, k, 2, h, w) * (1.0 - gk)
        return self.conv(blend.reshape(b, c, h, w))


def refine_inter(
    n: torch.Tensor, gate: torch.Tensor, u: torch.Tensor, refiner: InterRefiner
) -> torch.Tensor:
    return refiner(n, gate, u)


class TimestepRefine(nn.Module):
    """Shared per-timestamp head: front conv, two residual blocks, back conv
    down to a 3-channel image residual."""

    def __init__(self, channels: int, width: int = 64):
        super().__init__()
        self.front = nn.Conv2d(channels, width, 3, 1, 1)
        self.blocks = res_stack(width, 2)
        self.back = nn.Conv2d(width, 3, 3, 1, 1)

    def forward(self, x):
        return self.back(self.blocks(lrelu(self.front(x))))


def progressive_step(
    g: torch.Tensor,
    flows: torch.Tensor,
    prev: torch.Tensor | None,
    refiner: TimestepRefine,
) -> torch.Tensor:
    """One coarse-to-fine accumulation step.

    Warps the stage feature ``g`` by each timestamp's flow, refines every
    warp to a 3-channel residual with shared weights, concatenates the
    timestamps, and adds the bilinearly upsampled accumulator from the
    previous (half-resolution) stage.  ``prev=None`` plays the all-zeros
    initializer.
    """
    b, c, h, w = g.shape
    k = flows.shape[1]
    if flows.dim() != 5 or flows.shape[2] != 2 or flows.shape[-2:] != (h, w):
        raise ValueError(f"flows must be (B, K, 2, {h}, {w}), got {tuple(flows.shape)}")
    rep = g.repeat_interleave(k, dim=0)
    warped = backward_warp(rep, flows.reshape(b * k, 2, h, w))
    refined = refiner(warped)                       # (B*K, 3, h, w)
    out = refined.view(b, k * 3, h, w)
    if prev is not None:
        if prev.shape[1] != k * 3:
            raise ValueError(f"accumulator has {prev.shape[1]} channels, expected {k * 3}")
        out = out + F.interpolate(prev, size=(h, w), mode="bilinear", align_corners=False)
    return out


class ReconEncoder(nn.Module):
    """Four residual stages at scales 1, 1/2, 1/4, 1/8."""

    def __init__(self, window: int, widths=(64, 128, 256, 256), blocks=(3, 6, 6, 6)):
        super().__init__()
        w1, w2, w3, w4 = widths
        self.stage1 = nn.Sequential(
            nn.Conv2d(window * 3, w1, 7, 1, 3), nn.LeakyReLU(0.1), res_stack(w1, blocks[0])
        )
        self.stage2 = nn.Sequential(
            nn.Conv2d(w1, w2, 3, 2, 1), nn.LeakyReLU(0.1), res_stack(w2, blocks[1])
        )
        self.stage3 = nn.Sequential(
            nn.Conv2d(w2, w3, 3, 2, 1), nn.LeakyReLU(0.1), res_stack(w3, blocks[2])
        )
        self.stage4 = nn.Sequential(
            nn.Conv2d(w3, w4, 3, 2, 1), nn.LeakyReLU(0.1), res_stack(w4, blocks[3])
        )

    def forward(self, y: torch.Tensor) -> list[torch.Tensor]:
        h, w = y.shape[-2:]
        if h % 8 or w % 8:
            raise ValueError(f"spatial size {h}x{w} must be divisible by 8")
        f1 = self.stage1(y)
        f2 = self.stage2(f1)
        f3 = self.stage3(f2)
        f4 = self.stage4(f3)
        return [f1, f2, f3, f4]


def encode(y: torch.Tensor, encoder: ReconEncoder) -> list[torch.Tensor]:
    return encoder(y)


class DecoderStage(nn.Module):
    def __init__(
        self,
        cin: int,
        cout: int,
        embed_dim: int,
        window: int,
        shutter: int,
        refine_width: int,
        blocks: int = 6,
        adapt_mode: str = "econv",
        use_refine: bool = True,
        eps: float = 1e-5,
    ):
        super().__init__()
        self.up = nn.ConvTranspose2d(cin, cout, 3, 2, 1, output_padding=1)
        self.blocks = res_stack(cout, blocks)
        self.adapt = FeatureAdapter(embed_dim, cout, mode=adapt_mode, eps=eps)
        self.intra_refiner = IntraRefiner(window, cout) if use_refine else None
        self.inter_refiner = (
            InterRefiner(embed_dim, window, shutter, mode=adapt_mode, eps=eps)
            if use_refine
            else None
        )
        self.refine = TimestepRefine(cout, refine_width)

    def features(self, x, u):
        return self.adapt(self.blocks(lrelu(self.up(x))), u)


class ReconstructionNet(nn.Module):
    """Blurred window + exposure embedding + motion bundle -> sharp frames.

    Decoder stages add the matching encoder feature after each stage's
    conditioning; the per-timestamp accumulator is carried across scales and
    added to the back end's frame stack at full resolution.
    """

    def __init__(
        self,
        window: int,
        shutter: int,
        embed_dim: int,
        widths=(64, 128, 256, 256),
        refine_width: int = 64,
        adapt_mode: str = "econv",
        use_refine: bool = True,
        use_motion: bool = True,
        eps: float = 1e-5,
    ):
        super().__init__()
        w1, w2, w3, w4 = widths
        self.window = window
        self.shutter = shutter
        self.use_refine = use_refine
        self.use_motion = use_motion
        self.encoder = ReconEncoder(window, widths)
        common = dict(
            embed_dim=embed_dim,
            window=window,
            shutter=shutter,
            refine_width=refine_width,
            adapt_mode=adapt_mode,
            use_refine=use_refine,
            eps=eps,
        )
        self.stage1 = DecoderStage(w4, w3, **common)
        self.stage2 = DecoderStage(w3, w2, **common)
        self.stage3 = DecoderStage(w2, w1, **common)
        self.back = res_stack(w1, 3)
        self.head = nn.Conv2d(w1, shutter * window * 3, 3, 1, 1)

    @property
    def n_outputs(self) -> int:
        return self.shutter * self.window

    def _stage_flows(self, stage, g, bundle, u):
        b, _, h, w = g.shape
        k = self.n_outputs
        if not self.use_motion:
            return g.new_zeros(b, k, 2, h, w)
        m = resize_map(bundle.m.reshape(b, self.window, *bundle.m.shape[-2:]), (h, w))
        n = resize_map(
            bundle.n.reshape(b, k * 2, *bundle.n.shape[-2:]), (h, w), is_flow=True
        )
        if self.use_refine:
            gate = stage.intra_refiner(m, g)
            n = stage.inter_refiner(n, gate, u)
        return n.view(b, k, 2, h, w)

    def forward(self, y: torch.Tensor, u: torch.Tensor, bundle: MotionBundle) -> torch.Tensor:
        k = self.n_outputs
        f1, f2, f3, f4 = self.encoder(y)
        ghat = None
        x, skips = f4, (f3, f2, f1)
        for stage, skip in zip((self.stage1, self.stage2, self.stage3), skips):
            g = stage.features(x, u)
            flows = self._stage_flows(stage, g, bundle, u)
            ghat = progressive_step(g, flows, ghat, stage.refine)
            if ghat.shape[1] != k * 3:
                raise RuntimeError(
                    f"accumulator carries {ghat.shape[1]} channels, expected {k * 3}"
                )
            x = g + skip
        frames = self.head(self.back(x)) + ghat
        b, _, h, w = frames.shape
        return frames.view(b, k, 3, h, w)


def reconstruct(
    y: torch.Tensor, u: torch.Tensor, bundle: MotionBundle, net: ReconstructionNet
) -> torch.Tensor:
    return net(y, u, bundle)
