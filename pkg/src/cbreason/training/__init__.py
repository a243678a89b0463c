"""Variant construction and the optimization loop."""

from .loop import FoldResult, TrainConfig, TrainingError, fit, predict_samples
from .schedule import lr_schedule
from .variants import (
    LABEL_CAPTION_TEMPLATE,
    VariantKind,
    VariantSpec,
    build_variant,
    caption_for_label,
)

__all__ = [
    "FoldResult",
    "LABEL_CAPTION_TEMPLATE",
    "TrainConfig",
    "TrainingError",
    "VariantKind",
    "VariantSpec",
    "build_variant",
    "caption_for_label",
    "fit",
    "lr_schedule",
    "predict_samples",
]
