"""Honest two-stage calibration: contrastively train the extractor on
synthetic windows, freeze it, then compare joint overfitting (full model)
against the exposure-agnostic ablation at the same budget."""

import math
import sys
import time

import numpy as np
import torch

from vidue.config import model_preset, train_preset
from vidue.degradation import ExposureConfig, make_sample
from vidue.exposure import train_extractor
from vidue.model import build_model
from vidue.synthetic import moving_texture_sequence, synthetic_library
from vidue.training import WindowDataset, mae_loss, seed_everything


def overfit_batch(seed=123, size=32):
    rng = np.random.default_rng(seed)
    seq = moving_texture_sequence(rng, frames=8, height=size, width=size, max_speed=2)
    ins, tgts = [], []
    for e in (1, 2, 3, 4):
        s = make_sample(seq, ExposureConfig(4, e, 2), 0)
        ins.append(s.blurred)
        tgts.append(s.sharp_targets)
    return torch.from_numpy(np.stack(ins)), torch.from_numpy(np.stack(tgts))


def pretrain_extractor(seed):
    lib = synthetic_library(seed=500, n_sequences=8, frames=12, height=48, width=48)
    dataset = WindowDataset(lib, shutter=4, window=2)
    cfg = train_preset("micro", "exposure", epochs=2, steps_per_epoch=100, seed=seed)
    t0 = time.monotonic()
    result = train_extractor(dataset, cfg)
    print(f"extractor pretrain: {time.monotonic() - t0:.0f}s, "
          f"loss {result.losses[0]:.3f} -> {result.losses[-1]:.3f}", flush=True)
    return result.extractor


def run(mode, seed, steps, lr, extractor=None):
    seed_everything(seed)
    spec = model_preset("micro", exposure_mode=mode)
    model = build_model(spec)
    if extractor is not None and mode == "contrastive":
        model.extractor.load_state_dict(extractor.state_dict())
    model.freeze_extractor()
    y, x = overfit_batch()
    opt = torch.optim.Adamax(model.trainable_parameters(), lr=lr)
    best = -1.0
    t0 = time.monotonic()
    for step in range(steps):
        pred = model(y)
        loss = mae_loss(pred, x)
        opt.zero_grad()
        loss.backward()
        opt.step()
        if (step + 1) % 100 == 0:
            with torch.no_grad():
                mse = float(((pred - x) ** 2).mean())
            psnr = 10 * math.log10(1.0 / mse)
            best = max(best, psnr)
            print(f"{mode} seed={seed} lr={lr} step={step+1} psnr={psnr:.2f} "
                  f"wall={time.monotonic() - t0:.0f}s", flush=True)
    return best


if __name__ == "__main__":
    steps = int(sys.argv[1]) if len(sys.argv) > 1 else 1200
    lr = float(sys.argv[2]) if len(sys.argv) > 2 else 2e-3
    ext = pretrain_extractor(0)
    results = {}
    results["contrastive"] = run("contrastive", 0, steps, lr, extractor=ext)
    results["agnostic"] = run("agnostic", 0, steps, lr)
    for k, v in results.items():
        print(f"== {k}: best {v:.2f} dB", flush=True)
