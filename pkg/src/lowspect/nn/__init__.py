from .checkpoint import load_checkpoint, save_checkpoint
from .layers import (
    BatchNorm,
    Conv2d,
    ConvTranspose2d,
    Dense,
    Dropout,
    Flatten,
    LeakyReLU,
    MaxPool2x2,
    Reshape,
)
from .loss import SsimLossConfig, ssim_loss
from .model import PRESETS, CnnrModel, build_cnnr, cnnr_forward, normalize_and_pad
from .optim import Adam, NonFiniteGradientError
from .train import TrainConfig, TrainHistory, TrainingDivergedError, train

__all__ = [
    "Adam",
    "BatchNorm",
    "CnnrModel",
    "Conv2d",
    "ConvTranspose2d",
    "Dense",
    "Dropout",
    "Flatten",
    "LeakyReLU",
    "MaxPool2x2",
    "NonFiniteGradientError",
    "PRESETS",
    "Reshape",
    "SsimLossConfig",
    "TrainConfig",
    "TrainHistory",
    "TrainingDivergedError",
    "build_cnnr",
    "cnnr_forward",
    "load_checkpoint",
    "normalize_and_pad",
    "save_checkpoint",
    "ssim_loss",
    "train",
]
