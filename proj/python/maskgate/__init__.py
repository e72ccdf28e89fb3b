"""Feature disentanglement masks: training, tracing, and pruning."""

from maskgate._core import (
    Dataset,
    MaskedNetwork,
    MaskgateError,
    ModelConfig,
    TrainConfig,
    binarize,
    build,
    evaluate_top1,
    finetune,
    load_csv,
    load_idx,
    parse_trace_csv,
    proportion_nonlinear,
    prune,
    split_holdout,
    synthetic,
    train,
)

__all__ = [
    "Dataset",
    "MaskedNetwork",
    "MaskgateError",
    "ModelConfig",
    "TrainConfig",
    "binarize",
    "build",
    "evaluate_top1",
    "finetune",
    "load_csv",
    "load_idx",
    "parse_trace_csv",
    "proportion_nonlinear",
    "prune",
    "split_holdout",
    "synthetic",
    "train",
]
