"""Model-assembly variants for the ablation ladder."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

from ..encoder.config import EncoderConfig, LossWeights
from ..encoder.model import (
    DIAGNOSIS_FROM_CONCEPTS,
    DIAGNOSIS_FROM_FEATURES,
    ConceptModel,
)

# Fixed sentence frame used as the contrastive text source when guideline-enriched
# reports are ablated away: it names only the class label.
LABEL_CAPTION_TEMPLATE = "An image of a {label} finding."


class VariantKind(str, Enum):
    CBM_SEQUENTIAL = "cbm_sequential"
    CLIP_CBL = "clip_cbl"
    CLIP_MTL = "clip_mtl"


@dataclass(frozen=True)
class VariantSpec:
    kind: VariantKind
    use_guideline_text: bool = True
    loss_weights: LossWeights = field(default_factory=LossWeights)

    def __post_init__(self) -> None:
        if self.kind is VariantKind.CBM_SEQUENTIAL:
            if self.loss_weights.contrastive > 0:
                raise ValueError(
                    "CBM_SEQUENTIAL has no text branch: contrastive weight must be 0, "
                    f"got {self.loss_weights.contrastive}"
                )
            if self.use_guideline_text:
                raise ValueError("CBM_SEQUENTIAL has no text branch: use_guideline_text must be False")

    @property
    def uses_text(self) -> bool:
        return self.kind is not VariantKind.CBM_SEQUENTIAL


def build_variant(spec: VariantSpec, enc_config: EncoderConfig) -> ConceptModel:
    """Assemble the model for a variant.

    CLIP_MTL diagnoses from visual features directly; CLIP_CBL routes the
    diagnosis through the predicted concept probabilities; CBM_SEQUENTIAL is
    the same bottleneck composition with no text branch.
    """
    if spec.kind is VariantKind.CLIP_MTL:
        return ConceptModel(enc_config, diagnosis_from=DIAGNOSIS_FROM_FEATURES, with_text=True)
    if spec.kind is VariantKind.CLIP_CBL:
        return ConceptModel(enc_config, diagnosis_from=DIAGNOSIS_FROM_CONCEPTS, with_text=True)
    if spec.kind is VariantKind.CBM_SEQUENTIAL:
        return ConceptModel(enc_config, diagnosis_from=DIAGNOSIS_FROM_CONCEPTS, with_text=False)
    raise ValueError(f"unknown variant kind: {spec.kind}")


def caption_for_label(label: str) -> str:
    return LABEL_CAPTION_TEMPLATE.format(label=label)
