"""Trainable per-feature input quantization for split inference."""
from .core import (
    QuantScheme,
    ThresholdSet,
    decode_bitwise,
    decode_midpoint,
    encode,
    fit_minmax,
    fit_quantile,
    hard_step,
    quantize_bitwise,
    quantize_midpoint,
)
from .estimators import METHODS, QuantizedMLPRegressor, ThresholdQuantizer
from .nn import DenseNet, QuantLayer, TrainConfig, load_checkpoint, save_checkpoint, train
from .preprocessing import Standardizer
from .soft import (
    SoftQuantLayer,
    TemperatureSchedule,
    grad_threshold,
    harden,
    schedule_tau,
    soft_bitwise,
    soft_encode,
    soft_step,
)

__version__ = "0.1.0"

__all__ = [
    "METHODS",
    "DenseNet",
    "QuantLayer",
    "QuantScheme",
    "QuantizedMLPRegressor",
    "SoftQuantLayer",
    "Standardizer",
    "TemperatureSchedule",
    "ThresholdQuantizer",
    "ThresholdSet",
    "TrainConfig",
    "decode_bitwise",
    "decode_midpoint",
    "encode",
    "fit_minmax",
    "fit_quantile",
    "grad_threshold",
    "hard_step",
    "harden",
    "load_checkpoint",
    "quantize_bitwise",
    "quantize_midpoint",
    "save_checkpoint",
    "schedule_tau",
    "soft_bitwise",
    "soft_encode",
    "soft_step",
    "train",
]
