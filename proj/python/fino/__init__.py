"""Python access to the fino change-detection core."""

from ._fino import (
    NumericError,
    canonical_config,
    confusion,
    evaluate,
    generate_pair,
    gradcheck,
    gradcheck_modules,
    metrics,
    poly_lr,
    predict,
    train,
    write_dataset,
)

__all__ = [
    "NumericError",
    "canonical_config",
    "confusion",
    "evaluate",
    "generate_pair",
    "gradcheck",
    "gradcheck_modules",
    "metrics",
    "poly_lr",
    "predict",
    "train",
    "write_dataset",
]
