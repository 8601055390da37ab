"""CNN training engine with a per-batch adaptive normalization gate."""

from ._core import (
    BatchNorm,
    EngineError,
    ThresholdTable,
    __version__,
    calibrate_thresholds,
    conv2d,
    dense_affine,
    gate_batch,
    gradient_checks,
    instance_average,
    kfold_split,
    make_batches,
    maxpool2d,
    read_idx_pair,
    relu,
    run_crossval,
    run_training,
    softmax_cross_entropy,
    synthetic_digits,
)

__all__ = [
    "BatchNorm",
    "EngineError",
    "ThresholdTable",
    "__version__",
    "calibrate_thresholds",
    "conv2d",
    "dense_affine",
    "gate_batch",
    "gradient_checks",
    "instance_average",
    "kfold_split",
    "make_batches",
    "maxpool2d",
    "read_idx_pair",
    "relu",
    "run_crossval",
    "run_training",
    "softmax_cross_entropy",
    "synthetic_digits",
]
