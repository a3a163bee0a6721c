"""Blur synthesis from high-framerate sharp sequences, and dataset slicing.

A low-framerate camera integrates the scene over the exposure phase of each
shutter period and sees nothing during the readout remainder.  With sharp
latent frames available at the high framerate, one blurred output frame is
the unweighted mean of ``exposure`` consecutive latent frames out of every
``shutter``; varying ``exposure`` varies the blur strength.

Sequences are rank-4 float arrays (frames x 3 x H x W) with values in [0, 1].
On disk a sequence is a directory of 8-bit lossless images, one per frame:
``<root>/<sequence_name>/<frame_index:06d>.png``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ConfigError, DataError


@dataclass(frozen=True)
class ExposureConfig:
    """Degradation parameters.

    shutter: latent frames per blurred output frame (S).
    exposure: latent frames integrated per output frame (1 <= exposure <= shutter);
        exposure == shutter means zero effective readout.
    window: blurred frames per sample (T).
    """

    shutter: int
    exposure: int
    window: int = 4

    def __post_init__(self):
        if self.shutter < 1:
            raise ConfigError(f"shutter must be >= 1, got {self.shutter}")
        if not 1 <= self.exposure <= self.shutter:
            raise ConfigError(
                f"exposure must lie in [1, {self.shutter}], got {self.exposure}"
            )
        if self.window < 1:
            raise ConfigError(f"window must be >= 1, got {self.window}")

    @property
    def readout(self) -> int:
        """Latent frames per period that no blurred frame observes."""
        return self.shutter - self.exposure

    @property
    def targets_per_sample(self) -> int:
        return self.shutter * self.window


@dataclass
class Sample:
    """One training/evaluation unit: ``window`` blurred inputs and the
    ``shutter * window`` sharp frames they were synthesized from."""

    blurred: np.ndarray        # (T, 3, h, w)
    sharp_targets: np.ndarray  # (S*T, 3, h, w)
    config: ExposureConfig
    source_id: str = ""
    start_index: int = 0


def synthesize_blur(sharp: np.ndarray, config: ExposureConfig, t: int) -> np.ndarray:
    """Mean of the ``exposure`` latent frames starting at index t * shutter.

    Returns a (3, H, W) float frame; frames in the readout gap are skipped.
    """
    lo = t * config.shutter
    hi = lo + config.exposure
    if lo < 0 or hi > sharp.shape[0]:
        raise IndexError(
            f"exposure window [{lo}, {hi}) exceeds sequence of {sharp.shape[0]} frames"
        )
    window = np.asarray(sharp[lo:hi], dtype=np.float64)
    return window.mean(axis=0).astype(np.float32)


def make_sample(
    sharp: np.ndarray,
    config: ExposureConfig,
    start: int,
    source_id: str = "",
) -> Sample:
    """Slice one sample whose first exposure window opens at frame ``start``.

    Consecutive blurred frames use exposure windows spaced ``shutter`` frames
    apart; targets are the full run of shutter * window sharp frames.
    """
    need = start + config.targets_per_sample
    if start < 0 or need > sharp.shape[0]:
        raise DataError(
            f"sample at start={start} needs {need} frames, sequence has {sharp.shape[0]}"
        )
    tail = sharp[start:]
    blurred = np.stack(
        [synthesize_blur(tail, config, i) for i in range(config.window)]
    )
    targets = np.asarray(sharp[start:need], dtype=np.float32)
    return Sample(blurred, targets, config, source_id=source_id, start_index=start)


def exposure_center_index(config: ExposureConfig, t: int) -> int:
    """Target index whose latent instant sits at the center of blurred frame
    t's exposure window (lower median when the exposure length is even).

    Evaluation splits reconstructed frames into deblurring frames (these
    centers) and interpolation frames (all others).
    """
    return t * config.shutter + (config.exposure - 1) // 2


# ---------------------------------------------------------------------------
# Frame / sequence IO


def load_frame(path: str | Path) -> np.ndarray:
    """Read an 8-bit image into a (3, H, W) float32 array in [0, 1]."""
    try:
        with Image.open(path) as im:
            rgb = im.convert("RGB")
            arr = np.asarray(rgb, dtype=np.float32) / 255.0
    except FileNotFoundError:
        raise
    except Exception as exc:  # PIL raises a zoo of decode errors
        raise DataError(f"cannot decode image {path}: {exc}") from exc
    return np.ascontiguousarray(arr.transpose(2, 0, 1))


def save_frame(path: str | Path, frame: np.ndarray) -> None:
    """Quantize a (3, H, W) float frame in [0, 1] to 8-bit and write it."""
    arr = np.clip(np.asarray(frame, dtype=np.float32), 0.0, 1.0)
    bits = (arr * 255.0 + 0.5).astype(np.uint8).transpose(1, 2, 0)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(bits).save(path)


def list_sequences(root: str | Path) -> dict[str, list[Path]]:
    """Map sequence name -> sorted frame paths under a dataset root."""
    root = Path(root)
    if not root.is_dir():
        raise DataError(f"dataset root {root} is not a directory")
    sequences = {}
    for child in sorted(root.iterdir()):
        if not child.is_dir():
            continue
        frames = sorted(
            p for p in child.iterdir() if p.suffix.lower() in (".png", ".bmp", ".tif", ".tiff")
        )
        if frames:
            sequences[child.name] = frames
    if not sequences:
        raise DataError(f"no frame sequences found under {root}")
    return sequences


class SequenceLibrary:
    """Sharp sequences held in memory, sliced into samples on demand.

    Designed for desk-scale corpora; every frame is loaded eagerly.
    """

    def __init__(self, names: list[str], sequences: list[np.ndarray]):
        if len(names) != len(sequences):
            raise ConfigError("names and sequences must align")
        for seq in sequences:
            if seq.ndim != 4 or seq.shape[1] != 3:
                raise ConfigError(f"sequence must be (frames, 3, H, W), got {seq.shape}")
        self.names = list(names)
        self.sequences = [np.asarray(s, dtype=np.float32) for s in sequences]

    @classmethod
    def from_directory(cls, root: str | Path) -> "SequenceLibrary":
        names, arrays = [], []
        for name, paths in list_sequences(root).items():
            frames = np.stack([load_frame(p) for p in paths])
            names.append(name)
            arrays.append(frames)
        return cls(names, arrays)

    def __len__(self) -> int:
        return len(self.sequences)

    def num_samples(self, config: ExposureConfig) -> int:
        span = config.targets_per_sample
        return sum(seq.shape[0] // span for seq in self.sequences)

    def sample_starts(self, config: ExposureConfig):
        """Non-overlapping (sequence_index, start) pairs covering the library."""
        span = config.targets_per_sample
        for idx, seq in enumerate(self.sequences):
            for k in range(seq.shape[0] // span):
                yield idx, k * span

    def make_sample(self, config: ExposureConfig, seq_index: int, start: int) -> Sample:
        return make_sample(
            self.sequences[seq_index], config, start, source_id=self.names[seq_index]
        )

    def random_sample(self, rng: np.random.Generator, config: ExposureConfig) -> Sample:
        """Uniform sequence, uniform valid start (any offset, not grid-aligned)."""
        idx = int(rng.integers(len(self.sequences)))
        span = config.targets_per_sample
        room = self.sequences[idx].shape[0] - span
        if room < 0:
            raise DataError(
                f"sequence {self.names[idx]} too short for {span}-frame samples"
            )
        start = int(rng.integers(room + 1))
        return self.make_sample(config, idx, start)


# ---------------------------------------------------------------------------
# Dataset materialization (the `synthesize` command)


def synthesize_dataset(
    root: str | Path,
    out: str | Path,
    shutter: int,
    exposures: list[int],
    window: int = 4,
    run_config: dict | None = None,
) -> Path:
    """Write blurred frames for every sequence and exposure, plus a manifest.

    Layout: ``<out>/<sequence>/blur_S<S>_E<E>/<t:06d>.png``.  The manifest
    records one entry per sample (source_id, start, shutter, exposure, frame
    paths) and embeds the run configuration that produced it.
    """
    out = Path(out)
    sequences = list_sequences(root)
    records = []
    for exposure in exposures:
        config = ExposureConfig(shutter=shutter, exposure=exposure, window=window)
        for name, paths in sequences.items():
            frames = np.stack([load_frame(p) for p in paths])
            blur_dir = out / name / f"blur_S{shutter}_E{exposure}"
            n_blur = frames.shape[0] // shutter
            written = []
            for t in range(n_blur):
                if t * shutter + exposure > frames.shape[0]:
                    break
                frame = synthesize_blur(frames, config, t)
                dest = blur_dir / f"{t:06d}.png"
                save_frame(dest, frame)
                written.append(dest)
            span = config.targets_per_sample
            for k in range(frames.shape[0] // span):
                start = k * span
                first = start // shutter
                records.append(
                    {
                        "source_id": name,
                        "start": start,
                        "shutter": shutter,
                        "exposure": exposure,
                        "frames": [
                            str(written[first + i].relative_to(out))
                            for i in range(window)
                        ],
                    }
                )
    manifest = {"config": run_config or {}, "samples": records}
    manifest_path = out / "manifest.json"
    manifest_path.parent.mkdir(parents=True, exist_ok=True)
    manifest_path.write_text(json.dumps(manifest, indent=2))
    return manifest_path
