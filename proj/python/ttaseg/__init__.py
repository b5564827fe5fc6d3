"""Segmentation with Monte Carlo test-time augmentation and uncertainty-aware thresholding."""

from ._ttaseg import (
    ArgumentError,
    FormatError,
    SegModel,
    ShapeError,
    StateError,
    TrainingError,
    aggregate,
    bce,
    cli,
    combined_loss,
    fixed_threshold,
    generate_dataset,
    generate_phantom,
    gradcheck,
    hard_dice,
    load_dataset,
    load_tensor,
    mc_predict,
    save_dataset,
    save_tensor,
    segment,
    soft_dice,
    train,
    warp,
)

__all__ = [
    "ArgumentError",
    "FormatError",
    "SegModel",
    "ShapeError",
    "StateError",
    "TrainingError",
    "aggregate",
    "bce",
    "cli",
    "combined_loss",
    "fixed_threshold",
    "generate_dataset",
    "generate_phantom",
    "gradcheck",
    "hard_dice",
    "load_dataset",
    "load_tensor",
    "mc_predict",
    "save_dataset",
    "save_tensor",
    "segment",
    "soft_dice",
    "train",
    "warp",
]
