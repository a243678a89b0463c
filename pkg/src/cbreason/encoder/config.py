"""Configuration for the dual-encoder concept model and its objective weights."""

from __future__ import annotations

import math
from dataclasses import dataclass, field


@dataclass(frozen=True)
class LossWeights:
    """Weights of the three objective terms: contrastive, diagnostic, concept."""

    contrastive: float = 1.0
    diagnostic: float = 1.0
    concept: float = 1.0

    def __post_init__(self) -> None:
        for name in ("contrastive", "diagnostic", "concept"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise ValueError(f"loss weight '{name}' must be finite and >= 0, got {value}")


@dataclass(frozen=True)
class EncoderConfig:
    n_concepts: int
    embed_dim: int = 32
    vision_backbone_id: str = "tiny-cnn"
    text_backbone_id: str = "hash-bow"
    temperature_init: float = 0.07
    temperature_learnable: bool = True
    image_channels: int = 1
    n_classes: int = 2
    text_hash_buckets: int = 4096
    text_max_tokens: int = 256

    def __post_init__(self) -> None:
        if self.embed_dim <= 0:
            raise ValueError(f"embed_dim must be positive, got {self.embed_dim}")
        if self.n_concepts <= 0:
            raise ValueError(f"n_concepts must be positive, got {self.n_concepts}")
        if self.temperature_init <= 0:
            raise ValueError(f"temperature_init must be > 0, got {self.temperature_init}")
        if self.n_classes < 2:
            raise ValueError(f"n_classes must be >= 2, got {self.n_classes}")
