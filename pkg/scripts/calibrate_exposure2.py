"""Longer streaming calibration of the contrastive stage with periodic
linear-probe checks."""

import sys
import time

import numpy as np
import torch
from sklearn.linear_model import LogisticRegression

from vidue.exposure import ExposureExtractor, weighted_supcon_loss
from vidue.synthetic import synthetic_library
from vidue.training import WindowDataset, seed_everything


def probe(extractor, dataset, crop, n=160, seed=99):
    xs, ys, xt, yt = [], [], [], []
    extractor.eval()
    with torch.no_grad():
        rng = np.random.default_rng(seed)
        for _ in range(n // 8):
            v, l = dataset.contrastive_batch(rng, 4, crop)
            xs.append(extractor(v).numpy()); ys.append(l.numpy())
        rng = np.random.default_rng(seed + 1)
        for _ in range(n // 8):
            v, l = dataset.contrastive_batch(rng, 4, crop)
            xt.append(extractor(v).numpy()); yt.append(l.numpy())
    extractor.train()
    clf = LogisticRegression(max_iter=5000).fit(np.concatenate(xs), np.concatenate(ys))
    return float(clf.score(np.concatenate(xt), np.concatenate(yt)))


def run(lr, steps, batch_pairs=8, crop=32):
    seed_everything(0)
    lib = synthetic_library(seed=500, n_sequences=12, frames=12, height=48, width=48)
    ds = WindowDataset(lib, shutter=4, window=2)
    net = ExposureExtractor(2, 8, 64)
    opt = torch.optim.Adam(net.parameters(), lr=lr)
    rng = np.random.default_rng(0)
    t0 = time.monotonic()
    recent = []
    for step in range(steps):
        views, labels = ds.contrastive_batch(rng, batch_pairs, crop)
        emb = net(views)
        loss = weighted_supcon_loss(emb, labels, alpha=0.5)
        opt.zero_grad(); loss.backward(); opt.step()
        recent.append(float(loss.detach()))
        if (step + 1) % 250 == 0:
            acc = probe(net, ds, crop)
            print(f"lr={lr} step={step+1} loss={np.mean(recent[-100:]):.2f} "
                  f"probe={acc:.3f} wall={time.monotonic()-t0:.0f}s", flush=True)
    return net


if __name__ == "__main__":
    for lr in [float(v) for v in sys.argv[1:]] or [3e-3]:
        run(lr, 1500)
