"""PSNR/SSIM and the deblurring / interpolation / average reporting split.

Reconstructed frames aligned with the center of an input frame's exposure
window count as deblurring output; every other reconstructed frame counts as
interpolation output.  All aggregates are frame-uniform means.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .degradation import ExposureConfig, exposure_center_index
from .errors import ConfigError

PSNR_CAP_DB = 100.0


def mse(a: np.ndarray, b: np.ndarray) -> float:
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    diff = np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)
    return float(np.mean(diff * diff))


def psnr(a: np.ndarray, b: np.ndarray, peak: float = 1.0, cap: float = PSNR_CAP_DB) -> float:
    """10*log10(peak^2 / MSE) in dB; identical inputs report ``cap``."""
    err = mse(a, b)
    if err == 0.0:
        return cap
    return min(10.0 * math.log10(peak * peak / err), cap)


def gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    half = (size - 1) / 2.0
    coords = np.arange(size, dtype=np.float64) - half
    g = np.exp(-(coords**2) / (2.0 * sigma * sigma))
    kernel = np.outer(g, g)
    return kernel / kernel.sum()


def _windowed_mean(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    # 'valid' correlation of a 2-D image with the window.
    k = kernel.shape[0]
    view = np.lib.stride_tricks.sliding_window_view(img, (k, k))
    return np.tensordot(view, kernel, axes=([2, 3], [0, 1]))


def ssim(
    a: np.ndarray,
    b: np.ndarray,
    peak: float = 1.0,
    window: int = 11,
    sigma: float = 1.5,
    k1: float = 0.01,
    k2: float = 0.03,
) -> float:
    """Mean local structural similarity with a Gaussian window, computed per
    channel on (3, H, W) frames and averaged."""
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    if min(a.shape[-2], a.shape[-1]) < window:
        raise ValueError(f"frame smaller than the {window}x{window} window")
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim == 2:
        a, b = a[None], b[None]
    kernel = gaussian_window(window, sigma)
    c1 = (k1 * peak) ** 2
    c2 = (k2 * peak) ** 2
    scores = []
    for ca, cb in zip(a, b):
        mu_a = _windowed_mean(ca, kernel)
        mu_b = _windowed_mean(cb, kernel)
        e_aa = _windowed_mean(ca * ca, kernel)
        e_bb = _windowed_mean(cb * cb, kernel)
        e_ab = _windowed_mean(ca * cb, kernel)
        var_a = e_aa - mu_a * mu_a
        var_b = e_bb - mu_b * mu_b
        cov = e_ab - mu_a * mu_b
        num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)
        den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
        scores.append(np.mean(num / den))
    return float(np.mean(scores))


def quantize_8bit(frames: np.ndarray) -> np.ndarray:
    return np.round(np.clip(frames, 0.0, 1.0) * 255.0) / 255.0


@dataclass
class EvalReport:
    """Per-frame metrics and the three aggregates for one sample."""

    frame_psnr: list[float]
    frame_ssim: list[float]
    deblur_indices: list[int]
    deblur_psnr: float
    deblur_ssim: float
    interp_psnr: float
    interp_ssim: float
    avg_psnr: float
    avg_ssim: float
    exact_matches: int = 0
    metadata: dict = field(default_factory=dict)

    def frame_kinds(self) -> list[str]:
        marked = set(self.deblur_indices)
        return ["deblur" if i in marked else "interp" for i in range(len(self.frame_psnr))]


def split_report(
    pred: np.ndarray,
    target: np.ndarray,
    config: ExposureConfig,
    strict: bool = True,
    quantize: bool = False,
    metadata: dict | None = None,
) -> EvalReport:
    """Score an (S*T, 3, H, W) reconstruction against its targets.

    Deblurring metrics cover the exposure-center frames of the T inputs;
    interpolation metrics cover the rest; avg covers all S*T frames.  Even
    exposure lengths are rejected unless ``strict`` is off, in which case
    the lower-median center is used.
    """
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {target.shape}")
    n = config.targets_per_sample
    if pred.shape[0] != n:
        raise ValueError(f"expected {n} frames, got {pred.shape[0]}")
    if strict and config.exposure % 2 == 0:
        raise ConfigError(
            f"even exposure {config.exposure} has no exact center; pass strict=False "
            "to use the lower median"
        )
    if quantize:
        pred = quantize_8bit(pred)
        target = quantize_8bit(target)
    centers = [exposure_center_index(config, t) for t in range(config.window)]
    frame_psnr = [psnr(pred[i], target[i]) for i in range(n)]
    frame_ssim = [ssim(pred[i], target[i]) for i in range(n)]
    exact = sum(1 for i in range(n) if np.array_equal(pred[i], target[i]))
    marked = set(centers)
    deblur = [i for i in range(n) if i in marked]
    interp = [i for i in range(n) if i not in marked]

    def mean_over(indices, values):
        return float(np.mean([values[i] for i in indices])) if indices else float("nan")

    return EvalReport(
        frame_psnr=frame_psnr,
        frame_ssim=frame_ssim,
        deblur_indices=deblur,
        deblur_psnr=mean_over(deblur, frame_psnr),
        deblur_ssim=mean_over(deblur, frame_ssim),
        interp_psnr=mean_over(interp, frame_psnr),
        interp_ssim=mean_over(interp, frame_ssim),
        avg_psnr=float(np.mean(frame_psnr)),
        avg_ssim=float(np.mean(frame_ssim)),
        exact_matches=exact,
        metadata=metadata or {},
    )


def aggregate_reports(reports: list[EvalReport]) -> dict:
    """Frame-uniform aggregation across samples/sequences."""
    if not reports:
        raise ValueError("no reports to aggregate")

    def pool(kind: str, values: str) -> float:
        pooled = []
        for r in reports:
            kinds = r.frame_kinds()
            vals = getattr(r, values)
            pooled.extend(v for v, k in zip(vals, kinds) if kind == "all" or k == kind)
        return float(np.mean(pooled)) if pooled else float("nan")

    return {
        "deblur_psnr": pool("deblur", "frame_psnr"),
        "deblur_ssim": pool("deblur", "frame_ssim"),
        "interp_psnr": pool("interp", "frame_psnr"),
        "interp_ssim": pool("interp", "frame_ssim"),
        "avg_psnr": pool("all", "frame_psnr"),
        "avg_ssim": pool("all", "frame_ssim"),
        "frames": sum(len(r.frame_psnr) for r in reports),
        "capped_frames": sum(r.exact_matches for r in reports),
    }


def write_report_csv(path: str | Path, reports: list[EvalReport]) -> None:
    """One row per frame: sequence, frame_index, kind, psnr, ssim."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sequence", "frame_index", "kind", "psnr", "ssim"])
        for r in reports:
            seq = r.metadata.get("sequence", "")
            start = int(r.metadata.get("start", 0))
            for i, (p, s, kind) in enumerate(
                zip(r.frame_psnr, r.frame_ssim, r.frame_kinds())
            ):
                writer.writerow([seq, start + i, kind, f"{p:.6f}", f"{s:.6f}"])


def write_report_summary(
    path: str | Path, reports: list[EvalReport], run_config: dict | None = None
) -> dict:
    summary = {"config": run_config or {}, "aggregates": aggregate_reports(reports)}
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(summary, indent=2))
    return summary
