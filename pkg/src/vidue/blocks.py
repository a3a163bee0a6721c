"""Shared neural primitives: residual blocks, embedding-driven channel gain,
exposure-adaptive (weight-demodulated) convolution, backward warping, pixel
unshuffle, and map resizing.
"""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import NumericError

# Single global negative slope for every LeakyReLU in the model zoo.
LEAKY_SLOPE = 0.1


def lrelu(x: torch.Tensor) -> torch.Tensor:
    return F.leaky_relu(x, LEAKY_SLOPE)


class ResBlock(nn.Module):
    """conv -> (BN) -> LReLU -> conv -> (BN), plus identity skip."""

    def __init__(self, channels: int, kernel_size: int = 3, batch_norm: bool = False):
        super().__init__()
        pad = kernel_size // 2
        self.conv1 = nn.Conv2d(channels, channels, kernel_size, 1, pad)
        self.conv2 = nn.Conv2d(channels, channels, kernel_size, 1, pad)
        self.bn1 = nn.BatchNorm2d(channels) if batch_norm else None
        self.bn2 = nn.BatchNorm2d(channels) if batch_norm else None

    def forward(self, x):
        h = self.conv1(x)
        if self.bn1 is not None:
            h = self.bn1(h)
        h = lrelu(h)
        h = self.conv2(h)
        if self.bn2 is not None:
            h = self.bn2(h)
        return x + h


def res_stack(channels: int, count: int, kernel_size: int = 3, batch_norm: bool = False):
    return nn.Sequential(
        *[ResBlock(channels, kernel_size, batch_norm) for _ in range(count)]
    )


class ChannelGain(nn.Module):
    """Per-channel multiplicative gain computed from an embedding.

    gain = Sigmoid(W2 LReLU(W1 u)) in (0, 1), one scalar per channel,
    broadcast over space.  A squeeze-and-excitation style conditioner.
    """

    def __init__(self, embed_dim: int, channels: int, reduction: int = 4):
        super().__init__()
        hidden = max(channels // reduction, 1)
        self.fc1 = nn.Linear(embed_dim, hidden)
        self.fc2 = nn.Linear(hidden, channels)

    def gain(self, u: torch.Tensor) -> torch.Tensor:
        return torch.sigmoid(self.fc2(lrelu(self.fc1(u))))

    def forward(self, z: torch.Tensor, u: torch.Tensor) -> torch.Tensor:
        if u.shape[0] != z.shape[0]:
            raise ValueError(f"batch mismatch: features {z.shape[0]}, embeddings {u.shape[0]}")
        g = self.gain(u)
        if g.shape[1] != z.shape[1]:
            raise ValueError(f"gain dim {g.shape[1]} != feature channels {z.shape[1]}")
        return z * g[:, :, None, None]


def gain_tune(z: torch.Tensor, u: torch.Tensor, head: ChannelGain) -> torch.Tensor:
    return head(z, u)


class ExposureAdaptiveConv2d(nn.Module):
    """Convolution whose weights are modulated per sample by an embedding.

    The input is instance-normalized (learnable affine), the base filter bank
    is scaled per input channel by u' = W2 LReLU(W1 u) (no squashing), and
    each output channel's weights are renormalized to near-unit energy:

        w_ijk = w'_ijk * u'_i / sqrt(sum_{i,k} (w'_ijk * u'_i)^2 + eps)

    One demodulated bank per distinct embedding in the batch (grouped conv).
    """

    def __init__(
        self,
        embed_dim: int,
        in_channels: int,
        out_channels: int | None = None,
        reduction: int = 4,
        kernel_size: int = 3,
        eps: float = 1e-5,
    ):
        super().__init__()
        out_channels = in_channels if out_channels is None else out_channels
        hidden = max(in_channels // reduction, 1)
        self.fc1 = nn.Linear(embed_dim, hidden)
        self.fc2 = nn.Linear(hidden, in_channels)
        # Start with unit modulation so the layer behaves like a plain
        # demodulated conv before the head has learned anything.
        nn.init.zeros_(self.fc2.weight)
        nn.init.ones_(self.fc2.bias)
        self.weight = nn.Parameter(
            torch.randn(out_channels, in_channels, kernel_size, kernel_size)
        )
        self.norm_scale = nn.Parameter(torch.ones(in_channels))
        self.norm_bias = nn.Parameter(torch.zeros(in_channels))
        self.eps = float(eps)
        self.kernel_size = kernel_size

    def gain(self, u: torch.Tensor) -> torch.Tensor:
        return self.fc2(lrelu(self.fc1(u)))

    def modulated_weight(self, u: torch.Tensor) -> torch.Tensor:
        """Demodulated per-sample filter banks, shape (N, Cout, Cin, k, k)."""
        g = self.gain(u)
        if not torch.isfinite(g).all():
            raise NumericError("non-finite modulation gain")
        w = self.weight[None] * g[:, None, :, None, None]
        denom = torch.sqrt(w.pow(2).sum(dim=(2, 3, 4), keepdim=True) + self.eps)
        return w / denom

    def forward(self, z: torch.Tensor, u: torch.Tensor) -> torch.Tensor:
        n, c, h, w = z.shape
        if c != self.weight.shape[1]:
            raise ValueError(f"expected {self.weight.shape[1]} input channels, got {c}")
        if u.shape[0] != n:
            raise ValueError(f"batch mismatch: features {n}, embeddings {u.shape[0]}")
        z = F.instance_norm(z, weight=self.norm_scale, bias=self.norm_bias, eps=1e-5)
        bank = self.modulated_weight(u)  # (N, Co, Ci, k, k)
        co = bank.shape[1]
        out = F.conv2d(
            z.reshape(1, n * c, h, w),
            bank.reshape(n * co, c, self.kernel_size, self.kernel_size),
            padding=self.kernel_size // 2,
            groups=n,
        )
        return out.view(n, co, h, w)


def exposure_adaptive_conv(
    z: torch.Tensor, u: torch.Tensor, bank: ExposureAdaptiveConv2d
) -> torch.Tensor:
    return bank(z, u)


def backward_warp(feature: torch.Tensor, flow: torch.Tensor) -> torch.Tensor:
    """Bilinearly sample ``feature`` at p + flow(p); zeros outside the frame.

    feature: (N, C, H, W); flow: (N, 2, H, W) in pixel units, channel 0
    horizontal and channel 1 vertical displacement.
    """
    n, _, h, w = feature.shape
    if flow.shape[0] != n or flow.shape[1] != 2 or flow.shape[2:] != feature.shape[2:]:
        raise ValueError(f"flow shape {tuple(flow.shape)} does not match feature {tuple(feature.shape)}")
    dtype, device = feature.dtype, feature.device
    xs = torch.arange(w, dtype=dtype, device=device).view(1, 1, 1, w).expand(n, 1, h, w)
    ys = torch.arange(h, dtype=dtype, device=device).view(1, 1, h, 1).expand(n, 1, h, w)
    sx = xs + flow[:, 0:1]
    sy = ys + flow[:, 1:2]
    gx = 2.0 * sx / max(w - 1, 1) - 1.0
    gy = 2.0 * sy / max(h - 1, 1) - 1.0
    grid = torch.cat([gx, gy], dim=1).permute(0, 2, 3, 1)
    return F.grid_sample(
        feature, grid, mode="bilinear", padding_mode="zeros", align_corners=True
    )


def pixel_unshuffle(x: torch.Tensor, r: int) -> torch.Tensor:
    """(C, H, W) -> (C*r^2, H/r, W/r), raster-ordered sub-pixel channels."""
    if r == 1:
        return x
    h, w = x.shape[-2:]
    if h % r or w % r:
        raise ValueError(f"spatial size {h}x{w} not divisible by {r}")
    return F.pixel_unshuffle(x, r)


def resize_map(
    x: torch.Tensor, target_hw: tuple[int, int], is_flow: bool = False
) -> torch.Tensor:
    """Bilinear resize; flow maps additionally rescale their pixel-unit
    displacements (channel 0 by the width ratio, channel 1 by the height
    ratio; with more than 2 channels the pattern repeats pairwise)."""
    th, tw = int(target_hw[0]), int(target_hw[1])
    if th <= 0 or tw <= 0:
        raise ValueError(f"target size must be positive, got {(th, tw)}")
    sh, sw = x.shape[-2:]
    if (sh, sw) == (th, tw):
        return x
    out = F.interpolate(x, size=(th, tw), mode="bilinear", align_corners=False)
    if is_flow:
        c = out.shape[1]
        scale = torch.empty(c, dtype=out.dtype, device=out.device)
        scale[0::2] = tw / sw
        scale[1::2] = th / sh
        out = out * scale.view(1, c, 1, 1)
    return out
