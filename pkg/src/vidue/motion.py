"""Motion analysis conditioned on the exposure embedding.

Two U-Nets: a per-frame offset estimator whose start/end offsets summarize
the blur trajectory inside each frame (their RMS difference is the
intra-motion map), and a flow estimator that expands the stacked offsets of
a whole window into one backward flow field per reconstructed timestamp.
Both decoders are conditioned on the exposure embedding via channel gain.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from .blocks import ChannelGain, lrelu, pixel_unshuffle, res_stack


@dataclass
class MotionBundle:
    """Per-sample motion maps at input resolution.

    o_start, o_end: (B, T, 2, H, W) trajectory endpoint offsets in pixels.
    m: (B, T, 1, H, W) nonnegative intra-motion magnitude.
    n: (B, S*T, 2, H, W) backward flows, one per output timestamp.
    """

    o_start: torch.Tensor
    o_end: torch.Tensor
    m: torch.Tensor
    n: torch.Tensor


def intra_motion_map(o_start: torch.Tensor, o_end: torch.Tensor) -> torch.Tensor:
    """RMS over the two directional channels of (o_start - o_end).

    Accepts (..., 2, H, W); returns (..., 1, H, W)."""
    if o_start.shape != o_end.shape:
        raise ValueError("offset shapes must match")
    d = o_start - o_end
    return torch.sqrt(d.pow(2).mean(dim=-3, keepdim=True))


def _stride2(cin: int, cout: int):
    # Asymmetric pad keeps even sizes halving exactly under the k5/s2 conv.
    return nn.Sequential(nn.ZeroPad2d((1, 2, 1, 2)), nn.Conv2d(cin, cout, 5, 2, 0))


class IntraMotionNet(nn.Module):
    """Single frame -> 4 offset channels (start_x, start_y, end_x, end_y).

    PixelUnshuffle(2) front end, three k5 encoder stages, a 1x1/3x3
    bottleneck, and three gain-conditioned transposed-conv decoder stages
    with skip concatenation.  Spatial size must be divisible by 8.
    """

    def __init__(self, embed_dim: int, base_width: int = 16, in_channels: int = 3):
        super().__init__()
        w = base_width
        self.entry = nn.Conv2d(in_channels * 4, w, 5, 1, 2)
        self.enc1 = res_stack(w, 3, kernel_size=5)
        self.down1 = _stride2(w, 2 * w)
        self.enc2 = res_stack(2 * w, 3, kernel_size=5)
        self.down2 = _stride2(2 * w, 4 * w)
        self.enc3 = res_stack(4 * w, 3, kernel_size=5)
        self.mid1 = nn.Conv2d(4 * w, 8 * w, 1)
        self.mid2 = nn.Conv2d(8 * w, 4 * w, 3, 1, 1)
        self.gain1 = ChannelGain(embed_dim, 4 * w)
        self.up1 = nn.ConvTranspose2d(4 * w, 2 * w, 4, 2, 1)
        self.fuse1a = nn.Conv2d(4 * w, 8 * w, 1)
        self.fuse1b = nn.Conv2d(8 * w, 4 * w, 3, 1, 1)
        self.gain2 = ChannelGain(embed_dim, 4 * w)
        self.up2 = nn.ConvTranspose2d(4 * w, w, 4, 2, 1)
        self.fuse2a = nn.Conv2d(2 * w, 4 * w, 1)
        self.fuse2b = nn.Conv2d(4 * w, 2 * w, 3, 1, 1)
        self.gain3 = ChannelGain(embed_dim, 2 * w)
        self.up3 = nn.ConvTranspose2d(2 * w, 2 * w, 4, 2, 1)
        self.head = nn.Conv2d(2 * w, 4, 5, 1, 2)

    def forward(self, frames: torch.Tensor, u: torch.Tensor) -> torch.Tensor:
        h, w = frames.shape[-2:]
        if h % 8 or w % 8:
            raise ValueError(f"spatial size {h}x{w} must be divisible by 8")
        x = pixel_unshuffle(frames, 2)
        e1 = self.enc1(self.entry(x))          # w    @ H/2
        e2 = self.enc2(self.down1(e1))         # 2w   @ H/4
        e3 = self.enc3(self.down2(e2))         # 4w   @ H/8
        b = lrelu(self.mid2(lrelu(self.mid1(e3))))
        d = lrelu(self.up1(self.gain1(b, u)))  # 2w   @ H/4
        d = lrelu(self.fuse1b(lrelu(self.fuse1a(torch.cat([d, e2], dim=1)))))
        d = lrelu(self.up2(self.gain2(d, u)))  # w    @ H/2
        d = lrelu(self.fuse2b(lrelu(self.fuse2a(torch.cat([d, e1], dim=1)))))
        d = lrelu(self.up3(self.gain3(d, u)))  # 2w   @ H
        return self.head(d)


def intra_motion(
    frames: torch.Tensor, u: torch.Tensor, net: IntraMotionNet
) -> tuple[torch.Tensor, torch.Tensor]:
    """Run the per-frame net on a (B, T, 3, H, W) window with one embedding
    per sample; returns start/end offsets, each (B, T, 2, H, W)."""
    b, t = frames.shape[:2]
    flat = frames.reshape(b * t, *frames.shape[2:])
    out = net(flat, u.repeat_interleave(t, dim=0))
    out = out.view(b, t, 4, *out.shape[-2:])
    return out[:, :, 0:2], out[:, :, 2:4]


class InterMotionNet(nn.Module):
    """Stacked window offsets -> one backward flow per output timestamp.

    Five average-pool encoder levels (widths w..16w) and five bilinear-up
    decoder levels, each decoder level ending in channel gain; a final conv
    emits out_maps * 2 flow channels.  Upsampling targets the recorded
    encoder sizes, so odd intermediate sizes round-trip cleanly.
    """

    def __init__(
        self,
        embed_dim: int,
        in_channels: int,
        out_maps: int,
        base_width: int = 32,
    ):
        super().__init__()
        w = base_width
        ws = (w, 2 * w, 4 * w, 8 * w, 16 * w, 16 * w)
        kernels = (7, 5, 3, 3, 3, 3)
        self.out_maps = out_maps
        encoders = []
        cin = in_channels
        for width, k in zip(ws, kernels):
            encoders.append(
                nn.Sequential(
                    nn.Conv2d(cin, width, k, 1, k // 2),
                    nn.LeakyReLU(0.1),
                    nn.Conv2d(width, width, k, 1, k // 2),
                    nn.LeakyReLU(0.1),
                )
            )
            cin = width
        self.encoders = nn.ModuleList(encoders)
        dec_widths = list(reversed(ws[:-1]))  # 16w, 8w, 4w, 2w, w
        decoders, gains = [], []
        cin = ws[-1]
        for width in dec_widths:
            decoders.append(
                nn.Sequential(
                    nn.Conv2d(cin, width, 3, 1, 1),
                    nn.LeakyReLU(0.1),
                    nn.Conv2d(width, width, 3, 1, 1),
                    nn.LeakyReLU(0.1),
                )
            )
            gains.append(ChannelGain(embed_dim, width))
            cin = width
        self.decoders = nn.ModuleList(decoders)
        self.gains = nn.ModuleList(gains)
        self.head = nn.Conv2d(dec_widths[-1], out_maps * 2, 3, 1, 1)

    def forward(self, offsets: torch.Tensor, u: torch.Tensor) -> torch.Tensor:
        if offsets.shape[1] != self.encoders[0][0].in_channels:
            raise ValueError(
                f"expected {self.encoders[0][0].in_channels} input channels, "
                f"got {offsets.shape[1]}"
            )
        x = self.encoders[0](offsets)
        sizes = [x.shape[-2:]]
        for enc in self.encoders[1:]:
            # ceil_mode keeps 1-pixel maps alive at the deepest levels
            x = enc(F.avg_pool2d(x, 2, ceil_mode=True))
            sizes.append(x.shape[-2:])
        for dec, gain, size in zip(self.decoders, self.gains, reversed(sizes[:-1])):
            x = F.interpolate(x, size=size, mode="bilinear", align_corners=False)
            x = gain(dec(x), u)
        return self.head(x)


def inter_motion(
    offsets: torch.Tensor, u: torch.Tensor, net: InterMotionNet
) -> torch.Tensor:
    """Flows for every output timestamp, shape (B, out_maps, 2, H, W)."""
    out = net(offsets, u)
    b = out.shape[0]
    return out.view(b, net.out_maps, 2, *out.shape[-2:])


class MotionAnalyzer(nn.Module):
    """Joint intra/inter analysis for a window of blurred frames.

    Either half can be disabled for ablations; the disabled maps are zeros.
    Without intra offsets the inter net consumes the raw frames instead.
    """

    def __init__(
        self,
        embed_dim: int,
        window: int,
        shutter: int,
        intra_width: int = 16,
        inter_width: int = 32,
        use_intra: bool = True,
        use_inter: bool = True,
    ):
        super().__init__()
        self.window = window
        self.shutter = shutter
        self.intra = (
            IntraMotionNet(embed_dim, base_width=intra_width) if use_intra else None
        )
        inter_in = window * 4 if use_intra else window * 3
        self.inter = (
            InterMotionNet(
                embed_dim, inter_in, window * shutter, base_width=inter_width
            )
            if use_inter
            else None
        )

    def forward(self, y: torch.Tensor, u: torch.Tensor) -> MotionBundle:
        # y: (B, T*3, H, W)
        b = y.shape[0]
        t = self.window
        h, w = y.shape[-2:]
        frames = y.view(b, t, 3, h, w)
        if self.intra is not None:
            o_start, o_end = intra_motion(frames, u, self.intra)
            m = intra_motion_map(o_start, o_end)
            inter_in = torch.cat([o_start, o_end], dim=2).reshape(b, t * 4, h, w)
        else:
            zeros = y.new_zeros(b, t, 2, h, w)
            o_start, o_end = zeros, zeros
            m = y.new_zeros(b, t, 1, h, w)
            inter_in = y
        if self.inter is not None:
            n = inter_motion(inter_in, u, self.inter)
        else:
            n = y.new_zeros(b, t * self.shutter, 2, h, w)
        return MotionBundle(o_start=o_start, o_end=o_end, m=m, n=n)
