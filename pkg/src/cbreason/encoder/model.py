"""The dual-encoder concept model: encoders, heads, prediction, checkpoints."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import torch
import torch.nn.functional as F
from PIL import Image
from torch import nn

from .backbones import build_text_backbone, build_vision_backbone
from .config import EncoderConfig

DIAGNOSIS_FROM_FEATURES = "features"
DIAGNOSIS_FROM_CONCEPTS = "concepts"


@dataclass
class ModelOutputs:
    """Per-batch embeddings and head logits; embedding rows are unit norm."""

    h_v: torch.Tensor
    h_t: Optional[torch.Tensor]
    diag_logits: torch.Tensor
    concept_logits: torch.Tensor


@dataclass
class Predictions:
    y_hat: np.ndarray
    c_hat: np.ndarray


class ConceptAdapter(nn.Module):
    """Lightweight two-layer MLP head emitting 2-class logits for one concept."""

    def __init__(self, embed_dim: int, hidden: int):
        super().__init__()
        self.net = nn.Sequential(nn.Linear(embed_dim, hidden), nn.ReLU(), nn.Linear(hidden, 2))

    def forward(self, h_v: torch.Tensor) -> torch.Tensor:
        return self.net(h_v)


class ConceptModel(nn.Module):
    """Vision/text encoders with a diagnostic head and per-concept adapters.

    diagnosis_from selects the head input: visual features directly, or the
    predicted concept probabilities (the bottleneck route).
    """

    def __init__(
        self,
        config: EncoderConfig,
        diagnosis_from: str = DIAGNOSIS_FROM_FEATURES,
        with_text: bool = True,
    ):
        super().__init__()
        if diagnosis_from not in (DIAGNOSIS_FROM_FEATURES, DIAGNOSIS_FROM_CONCEPTS):
            raise ValueError(f"unknown diagnosis route '{diagnosis_from}'")
        self.config = config
        self.diagnosis_from = diagnosis_from
        self.with_text = with_text
        self.vision = build_vision_backbone(config)
        self.text = build_text_backbone(config) if with_text else None
        hidden = max(config.embed_dim // 4, 4)
        self.adapters = nn.ModuleList(
            ConceptAdapter(config.embed_dim, hidden) for _ in range(config.n_concepts)
        )
        head_in = config.embed_dim if diagnosis_from == DIAGNOSIS_FROM_FEATURES else config.n_concepts
        self.diag_head = nn.Linear(head_in, config.n_classes)
        self.log_temperature = nn.Parameter(
            torch.tensor(math.log(config.temperature_init)),
            requires_grad=config.temperature_learnable,
        )

    @property
    def temperature(self) -> torch.Tensor:
        return self.log_temperature.exp()

    def encode_image(self, images: torch.Tensor) -> torch.Tensor:
        return F.normalize(self.vision(images), dim=-1)

    def encode_text(self, texts: Sequence[str]) -> torch.Tensor:
        if self.text is None:
            raise RuntimeError("this model variant has no text branch")
        return F.normalize(self.text(texts), dim=-1)

    def concept_logits(self, h_v: torch.Tensor) -> torch.Tensor:
        return torch.stack([adapter(h_v) for adapter in self.adapters], dim=1)

    def concept_probs(self, h_v: torch.Tensor) -> torch.Tensor:
        return F.softmax(self.concept_logits(h_v), dim=-1)[..., 1]

    def diag_logits(self, h_v: torch.Tensor) -> torch.Tensor:
        if self.diagnosis_from == DIAGNOSIS_FROM_CONCEPTS:
            return self.diag_head(self.concept_probs(h_v))
        return self.diag_head(h_v)

    def forward(self, images: torch.Tensor, texts: Optional[Sequence[str]] = None) -> ModelOutputs:
        h_v = self.encode_image(images)
        h_t = self.encode_text(texts) if texts is not None else None
        return ModelOutputs(
            h_v=h_v,
            h_t=h_t,
            diag_logits=self.diag_logits(h_v),
            concept_logits=self.concept_logits(h_v),
        )

    @torch.no_grad()
    def predict(self, images: torch.Tensor) -> Predictions:
        """Positive-class probabilities for diagnosis and each concept."""
        self.eval()
        h_v = self.encode_image(images)
        y = F.softmax(self.diag_logits(h_v), dim=-1)[:, 1]
        c = self.concept_probs(h_v)
        return Predictions(y_hat=y.cpu().numpy(), c_hat=c.cpu().numpy())


def pil_to_tensor(image: Image.Image, channels: int = 1) -> torch.Tensor:
    """Convert a PIL image to a float tensor in [0, 1] with the requested channel count."""
    mode = "L" if channels == 1 else "RGB"
    arr = np.asarray(image.convert(mode), dtype=np.float32) / 255.0
    if channels == 1:
        arr = arr[None, :, :]
    else:
        arr = arr.transpose(2, 0, 1)
    return torch.from_numpy(arr)


def load_image_batch(paths: Sequence[Path | str], channels: int = 1) -> torch.Tensor:
    tensors = []
    for path in paths:
        with Image.open(path) as img:
            tensors.append(pil_to_tensor(img, channels))
    return torch.stack(tensors)


def save_checkpoint(model: ConceptModel, path: Path | str, metadata: Optional[dict] = None) -> Path:
    """Persist config + parameters + training metadata as one file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "config": json.dumps(asdict(model.config)),
        "diagnosis_from": model.diagnosis_from,
        "with_text": model.with_text,
        "state_dict": model.state_dict(),
        "metadata": json.dumps(metadata or {}, sort_keys=True),
    }
    torch.save(payload, path)
    return path


def load_checkpoint(path: Path | str) -> tuple[ConceptModel, dict]:
    payload = torch.load(Path(path), map_location="cpu", weights_only=True)
    config = EncoderConfig(**json.loads(payload["config"]))
    model = ConceptModel(
        config, diagnosis_from=payload["diagnosis_from"], with_text=payload["with_text"]
    )
    model.load_state_dict(payload["state_dict"])
    model.eval()
    return model, json.loads(payload["metadata"])


def export_embeddings(
    model: ConceptModel,
    images: torch.Tensor,
    sample_ids: Sequence[str],
    path: Path | str,
) -> Path:
    """Write one row per sample: sample_id followed by the visual embedding."""
    if len(sample_ids) != images.shape[0]:
        raise ValueError(f"{len(sample_ids)} ids for {images.shape[0]} images")
    model.eval()
    with torch.no_grad():
        h_v = model.encode_image(images).cpu().numpy()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["sample_id"] + [f"h_v_{i}" for i in range(h_v.shape[1])])
        for sid, row in zip(sample_ids, h_v):
            writer.writerow([sid] + [f"{v:.8f}" for v in row])
    return path
