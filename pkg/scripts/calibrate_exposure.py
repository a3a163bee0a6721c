"""Calibrate contrastive extractor training: loss trajectory and linear-probe
accuracy on held-out windows for several learning rates."""

import sys
import time

import numpy as np
import torch
from sklearn.linear_model import LogisticRegression

from vidue.config import model_preset, train_preset
from vidue.exposure import ExposureExtractor, train_extractor
from vidue.synthetic import synthetic_library
from vidue.training import WindowDataset


def embed_windows(extractor, dataset, rng, n, crop):
    xs, ys = [], []
    extractor.eval()
    with torch.no_grad():
        for _ in range(n // 8):
            views, labels = dataset.contrastive_batch(rng, 4, crop)
            xs.append(extractor(views).numpy())
            ys.append(labels.numpy())
    return np.concatenate(xs), np.concatenate(ys)


def probe_accuracy(extractor, dataset, crop, seed=99):
    rng_tr = np.random.default_rng(seed)
    rng_te = np.random.default_rng(seed + 1)
    xtr, ytr = embed_windows(extractor, dataset, rng_tr, 160, crop)
    xte, yte = embed_windows(extractor, dataset, rng_te, 160, crop)
    clf = LogisticRegression(max_iter=2000).fit(xtr, ytr)
    return float(clf.score(xte, yte))


def main():
    lrs = [float(v) for v in sys.argv[1:]] or [1e-2, 1e-3, 1e-4]
    lib = synthetic_library(seed=500, n_sequences=12, frames=12, height=48, width=48)
    dataset = WindowDataset(lib, shutter=4, window=2)
    crop = 32
    spec = model_preset("micro")

    untrained = ExposureExtractor(spec.window, spec.extractor_width, spec.embed_dim)
    print(f"untrained probe: {probe_accuracy(untrained, dataset, crop):.3f}", flush=True)

    for lr in lrs:
        cfg = train_preset("micro", "exposure", lr=lr, epochs=5, steps_per_epoch=100, seed=0)
        t0 = time.monotonic()
        res = train_extractor(dataset, cfg)
        acc = probe_accuracy(res.extractor, dataset, crop)
        ls = res.losses
        print(
            f"lr={lr}: loss {ls[0]:.2f} -> {np.mean(ls[-20:]):.2f} "
            f"probe={acc:.3f} wall={time.monotonic() - t0:.0f}s",
            flush=True,
        )


if __name__ == "__main__":
    main()
