"""Dual-encoder concept model: backbones, heads, losses, checkpoints."""

from .backbones import (
    HashTextEncoder,
    TinyImageEncoder,
    build_text_backbone,
    build_vision_backbone,
    register_text_backbone,
    register_vision_backbone,
)
from .config import EncoderConfig, LossWeights
from .losses import clip_loss, concept_loss, cosine_similarity_matrix, diag_loss, info_nce, total_loss
from .model import (
    DIAGNOSIS_FROM_CONCEPTS,
    DIAGNOSIS_FROM_FEATURES,
    ConceptModel,
    ModelOutputs,
    Predictions,
    export_embeddings,
    load_checkpoint,
    load_image_batch,
    pil_to_tensor,
    save_checkpoint,
)

__all__ = [
    "ConceptModel",
    "DIAGNOSIS_FROM_CONCEPTS",
    "DIAGNOSIS_FROM_FEATURES",
    "EncoderConfig",
    "HashTextEncoder",
    "LossWeights",
    "ModelOutputs",
    "Predictions",
    "TinyImageEncoder",
    "build_text_backbone",
    "build_vision_backbone",
    "clip_loss",
    "concept_loss",
    "cosine_similarity_matrix",
    "diag_loss",
    "export_embeddings",
    "info_nce",
    "load_checkpoint",
    "load_image_batch",
    "pil_to_tensor",
    "register_text_backbone",
    "register_vision_backbone",
    "save_checkpoint",
    "total_loss",
]
