"""Procedurally generated high-framerate sequences for demos and tests.

Each sequence is a smooth random texture translating at a constant integer
velocity, with an independently moving soft-edged foreground patch.  Because
motion is constant per sequence, blur strength after synthesis scales with
the exposure length, which is what the exposure-aware stages must pick up.
Per-sequence contrast/brightness jitter keeps global intensity statistics
uninformative about exposure.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F

from .degradation import SequenceLibrary, save_frame


def _smooth_noise(rng: np.random.Generator, height: int, width: int, cells: int) -> np.ndarray:
    """(3, H, W) texture from bilinearly upsampled low-res noise octaves."""
    out = np.zeros((3, height, width), dtype=np.float32)
    weight = 1.0
    total = 0.0
    scale = cells
    while scale >= 2 and weight > 0.1:
        low = rng.uniform(0.0, 1.0, size=(1, 3, scale, scale)).astype(np.float32)
        up = F.interpolate(
            torch.from_numpy(low), size=(height, width), mode="bilinear", align_corners=False
        )[0].numpy()
        out += weight * up
        total += weight
        weight *= 0.5
        scale *= 2
    return out / total


def _soft_disk(height: int, width: int, rng: np.random.Generator) -> np.ndarray:
    cy = rng.uniform(0.3, 0.7) * height
    cx = rng.uniform(0.3, 0.7) * width
    radius = rng.uniform(0.15, 0.3) * min(height, width)
    ys, xs = np.mgrid[0:height, 0:width]
    dist = np.sqrt((ys - cy) ** 2 + (xs - cx) ** 2)
    return np.clip((radius - dist) / (0.3 * radius), 0.0, 1.0).astype(np.float32)


def _draw_velocity(rng: np.random.Generator, speed: int) -> tuple[int, int]:
    # Axis-aligned with fixed magnitude: blur extent then depends only on the
    # exposure length, which keeps the micro-scale class structure clean.
    sign = 1 if rng.integers(2) else -1
    if rng.integers(2):
        return (sign * speed, 0)
    return (0, sign * speed)


def moving_texture_sequence(
    rng: np.random.Generator,
    frames: int,
    height: int,
    width: int,
    max_speed: int = 2,
    jitter: bool = True,
) -> np.ndarray:
    """A (frames, 3, H, W) sharp sequence in [0, 1]."""
    vbg = _draw_velocity(rng, max_speed)
    vfg = _draw_velocity(rng, max_speed)
    drift = max_speed * (frames - 1)
    bh, bw = height + 2 * drift + 4, width + 2 * drift + 4
    bg = _smooth_noise(rng, bh, bw, cells=6)
    fg = _smooth_noise(rng, bh, bw, cells=4)
    mask = _soft_disk(bh, bw, rng)[None]

    def origin(v):
        y0 = (bh - height - v[1] * (frames - 1)) // 2
        x0 = (bw - width - v[0] * (frames - 1)) // 2
        return y0, x0

    by0, bx0 = origin(vbg)
    fy0, fx0 = origin(vfg)
    seq = np.empty((frames, 3, height, width), dtype=np.float32)
    for t in range(frames):
        by, bx = by0 + vbg[1] * t, bx0 + vbg[0] * t
        fy, fx = fy0 + vfg[1] * t, fx0 + vfg[0] * t
        bg_w = bg[:, by : by + height, bx : bx + width]
        fg_w = fg[:, fy : fy + height, fx : fx + width]
        m_w = mask[:, fy : fy + height, fx : fx + width]
        seq[t] = bg_w * (1.0 - m_w) + fg_w * m_w
    if jitter:
        contrast = rng.uniform(0.4, 1.0)
        shift = rng.uniform(-0.1, 0.1)
        seq = 0.5 + (seq - 0.5) * contrast + shift
    return np.clip(seq, 0.0, 1.0)


def synthetic_library(
    seed: int,
    n_sequences: int,
    frames: int,
    height: int,
    width: int,
    max_speed: int = 2,
) -> SequenceLibrary:
    rng = np.random.default_rng(seed)
    names = [f"synthetic_{i:03d}" for i in range(n_sequences)]
    seqs = [
        moving_texture_sequence(rng, frames, height, width, max_speed=max_speed)
        for _ in range(n_sequences)
    ]
    return SequenceLibrary(names, seqs)


def write_library(library: SequenceLibrary, root: str | Path) -> Path:
    """Materialize a library as the on-disk PNG layout."""
    root = Path(root)
    for name, seq in zip(library.names, library.sequences):
        for i, frame in enumerate(seq):
            save_frame(root / name / f"{i:06d}.png", frame)
    return root
