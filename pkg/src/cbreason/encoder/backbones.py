"""Pluggable vision and text backbones.

The tiny randomly initialized pair keeps tests and synthetic training fast on
CPU; pretrained dual-encoder checkpoints plug in through the same registries.
"""

from __future__ import annotations

import logging
import re
import zlib
from typing import Callable, Sequence

import torch
from torch import nn

from .config import EncoderConfig

logger = logging.getLogger(__name__)

_TOKEN_RE = re.compile(r"[a-z0-9']+")
_EMPTY_BUCKET = 0


class TinyImageEncoder(nn.Module):
    """Small strided CNN for 224x224 inputs. GroupNorm keeps rows batch-independent."""

    def __init__(self, config: EncoderConfig):
        super().__init__()
        c = config.image_channels
        self.net = nn.Sequential(
            nn.Conv2d(c, 8, kernel_size=5, stride=4, padding=2),
            nn.GroupNorm(2, 8),
            nn.ReLU(),
            nn.Conv2d(8, 16, kernel_size=3, stride=2, padding=1),
            nn.GroupNorm(4, 16),
            nn.ReLU(),
            nn.Conv2d(16, 32, kernel_size=3, stride=2, padding=1),
            nn.GroupNorm(4, 32),
            nn.ReLU(),
            nn.AdaptiveAvgPool2d(4),
            nn.Flatten(),
            nn.Linear(32 * 16, config.embed_dim),
        )
        self.in_channels = c

    def forward(self, images: torch.Tensor) -> torch.Tensor:
        if images.ndim != 4 or images.shape[1] != self.in_channels:
            raise ValueError(
                f"expected image batch of shape (B, {self.in_channels}, H, W), got {tuple(images.shape)}"
            )
        return self.net(images)


class HashTextEncoder(nn.Module):
    """Hashing bag-of-words encoder: stable token hashing into an embedding bag."""

    def __init__(self, config: EncoderConfig):
        super().__init__()
        self.n_buckets = config.text_hash_buckets
        self.max_tokens = config.text_max_tokens
        token_dim = 64
        self.bag = nn.EmbeddingBag(self.n_buckets, token_dim, mode="mean")
        self.mlp = nn.Sequential(
            nn.Linear(token_dim, 64),
            nn.ReLU(),
            nn.Linear(64, config.embed_dim),
        )

    def _bucket(self, token: str) -> int:
        # zlib.crc32 is stable across processes, unlike the salted builtin hash.
        return zlib.crc32(token.encode("utf-8")) % (self.n_buckets - 1) + 1

    def tokenize(self, text: str) -> list[int]:
        tokens = _TOKEN_RE.findall(text.lower())[: self.max_tokens]
        if not tokens:
            return [_EMPTY_BUCKET]
        return [self._bucket(t) for t in tokens]

    def forward(self, texts: Sequence[str]) -> torch.Tensor:
        if isinstance(texts, str):
            raise TypeError("expected a sequence of strings, got a single string")
        n_empty = sum(1 for t in texts if not _TOKEN_RE.findall(t.lower()))
        if n_empty:
            logger.warning("text encoder received %d empty string(s); using the empty-token bucket", n_empty)
        flat: list[int] = []
        offsets: list[int] = []
        for text in texts:
            offsets.append(len(flat))
            flat.extend(self.tokenize(text))
        device = self.bag.weight.device
        ids = torch.tensor(flat, dtype=torch.long, device=device)
        offs = torch.tensor(offsets, dtype=torch.long, device=device)
        return self.mlp(self.bag(ids, offs))


VISION_BACKBONES: dict[str, Callable[[EncoderConfig], nn.Module]] = {"tiny-cnn": TinyImageEncoder}
TEXT_BACKBONES: dict[str, Callable[[EncoderConfig], nn.Module]] = {"hash-bow": HashTextEncoder}


def register_vision_backbone(backbone_id: str, factory: Callable[[EncoderConfig], nn.Module]) -> None:
    """Adapter point for pretrained dual-encoder checkpoints."""
    VISION_BACKBONES[backbone_id] = factory


def register_text_backbone(backbone_id: str, factory: Callable[[EncoderConfig], nn.Module]) -> None:
    TEXT_BACKBONES[backbone_id] = factory


def build_vision_backbone(config: EncoderConfig) -> nn.Module:
    try:
        return VISION_BACKBONES[config.vision_backbone_id](config)
    except KeyError:
        raise ValueError(
            f"unknown vision backbone '{config.vision_backbone_id}'; registered: {sorted(VISION_BACKBONES)}"
        ) from None


def build_text_backbone(config: EncoderConfig) -> nn.Module:
    try:
        return TEXT_BACKBONES[config.text_backbone_id](config)
    except KeyError:
        raise ValueError(
            f"unknown text backbone '{config.text_backbone_id}'; registered: {sorted(TEXT_BACKBONES)}"
        ) from None
