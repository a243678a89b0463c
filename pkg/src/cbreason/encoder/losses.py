"""The three objective terms and their weighted combination."""

from __future__ import annotations

import torch
import torch.nn.functional as F

from .config import LossWeights


def cosine_similarity_matrix(h_v: torch.Tensor, h_t: torch.Tensor) -> torch.Tensor:
    """Pairwise cosine similarities; rows are normalized defensively."""
    a = F.normalize(h_v, dim=-1)
    b = F.normalize(h_t, dim=-1)
    return a @ b.T


def info_nce(h_v: torch.Tensor, h_t: torch.Tensor, temperature) -> torch.Tensor:
    """One-directional contrastive cross-entropy (image-to-text)."""
    logits = cosine_similarity_matrix(h_v, h_t) / temperature
    targets = torch.arange(logits.shape[0], device=logits.device)
    return F.cross_entropy(logits, targets)


def clip_loss(h_v: torch.Tensor, h_t: torch.Tensor, temperature, symmetric: bool = True) -> torch.Tensor:
    """Symmetric contrastive loss over row-matched embedding batches.

    Mean of the image-to-text and text-to-image cross-entropies over the
    cosine-similarity matrix scaled by 1/temperature. Degenerates to 0 for a
    single pair. The one-directional form is exposed for ablation.
    """
    if h_v.ndim != 2 or h_t.ndim != 2 or h_v.shape != h_t.shape:
        raise ValueError(
            f"expected row-matched 2-d batches, got {tuple(h_v.shape)} and {tuple(h_t.shape)}"
        )
    temp_value = float(temperature.detach()) if isinstance(temperature, torch.Tensor) else float(temperature)
    if temp_value <= 0:
        raise ValueError(f"temperature must be > 0, got {temp_value}")
    forward = info_nce(h_v, h_t, temperature)
    if not symmetric:
        return forward
    backward = info_nce(h_t, h_v, temperature)
    return 0.5 * (forward + backward)


def diag_loss(diag_logits: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    """Mean cross-entropy of the diagnostic head over the batch."""
    return F.cross_entropy(diag_logits, labels.long())


def concept_loss(concept_logits: torch.Tensor, concepts: torch.Tensor) -> torch.Tensor:
    """Unweighted mean over the per-concept cross-entropies.

    concept_logits has shape (B, N_c, 2); concepts is the matching {0,1} matrix.
    """
    if concept_logits.ndim != 3 or concept_logits.shape[-1] != 2:
        raise ValueError(f"expected concept logits of shape (B, N_c, 2), got {tuple(concept_logits.shape)}")
    if concepts.shape != concept_logits.shape[:2]:
        raise ValueError(
            f"concept targets {tuple(concepts.shape)} do not match logits {tuple(concept_logits.shape[:2])}"
        )
    b, n_c, _ = concept_logits.shape
    return F.cross_entropy(concept_logits.reshape(b * n_c, 2), concepts.reshape(-1).long())


def total_loss(l_clip, l_y, l_c, weights: LossWeights):
    """Weighted sum of the three terms."""
    return weights.contrastive * l_clip + weights.diagnostic * l_y + weights.concept * l_c
