"""Joint multi-frame video interpolation and deblurring under unknown
exposure time: degradation synthesis, exposure-aware representation
learning, motion analysis, exposure-adaptive reconstruction, training, and
evaluation at configurable desk scale."""

from .config import ModelSpec, TrainConfig, model_preset, train_preset
from .degradation import (
    ExposureConfig,
    Sample,
    SequenceLibrary,
    exposure_center_index,
    make_sample,
    synthesize_blur,
)
from .errors import ConfigError, DataError, NumericError, VidueError
from .evaluation import EvalReport, psnr, split_report, ssim
from .model import RestorationModel, build_model
from .training import WindowDataset, augment, mae_loss, train_joint

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DataError",
    "EvalReport",
    "ExposureConfig",
    "ModelSpec",
    "NumericError",
    "RestorationModel",
    "Sample",
    "SequenceLibrary",
    "TrainConfig",
    "VidueError",
    "WindowDataset",
    "augment",
    "build_model",
    "exposure_center_index",
    "mae_loss",
    "make_sample",
    "model_preset",
    "psnr",
    "split_report",
    "ssim",
    "synthesize_blur",
    "train_joint",
    "train_preset",
    "__version__",
]
