"""Calibration run for the micro overfit regression: how fast does the full
model vs. the exposure-agnostic ablation reach high train PSNR on 4 samples?
"""

import math
import sys
import time

import numpy as np
import torch

from vidue.config import model_preset
from vidue.degradation import ExposureConfig, make_sample
from vidue.model import build_model
from vidue.synthetic import moving_texture_sequence
from vidue.training import mae_loss, seed_everything


def overfit_batch(seed=0, size=32):
    rng = np.random.default_rng(seed)
    seq = moving_texture_sequence(rng, frames=8, height=size, width=size, max_speed=2)
    ins, tgts = [], []
    for e in (1, 2, 3, 4):
        s = make_sample(seq, ExposureConfig(4, e, 2), 0)
        ins.append(s.blurred)
        tgts.append(s.sharp_targets)
    return torch.from_numpy(np.stack(ins)), torch.from_numpy(np.stack(tgts))


def run(mode, seed, steps, lr=1e-3):
    seed_everything(seed)
    spec = model_preset("micro", exposure_mode=mode)
    model = build_model(spec)
    y, x = overfit_batch(seed=123)
    opt = torch.optim.Adamax(model.parameters(), lr=lr)
    best = -1.0
    t0 = time.monotonic()
    for step in range(steps):
        pred = model(y)
        loss = mae_loss(pred, x)
        opt.zero_grad()
        loss.backward()
        opt.step()
        if (step + 1) % 50 == 0:
            with torch.no_grad():
                mse = float(((pred - x) ** 2).mean())
            psnr = 10 * math.log10(1.0 / mse)
            best = max(best, psnr)
            print(
                f"{mode} seed={seed} step={step + 1} mae={float(loss):.4f} "
                f"psnr={psnr:.2f} best={best:.2f} wall={time.monotonic() - t0:.0f}s",
                flush=True,
            )
    return best


if __name__ == "__main__":
    steps = int(sys.argv[1]) if len(sys.argv) > 1 else 800
    for mode in ("contrastive", "agnostic"):
        for seed in (0,):
            best = run(mode, seed, steps)
            print(f"== {mode} seed={seed}: best train PSNR {best:.2f}", flush=True)
