"""Synthetic concept-encoded corpus for desk-scale verification.

Each concept deterministically controls one visual attribute of a rendered
lesion-like scene, and the diagnostic label is a fixed logical function of
the first three concepts (majority vote), so the label is linearly
recoverable from the true concept vector. The generative parameters are
persisted in a sidecar file, which makes an exact oracle computable: reading
the sidecar and applying the label rule reproduces every label.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from PIL import Image

from .records import ConceptBank, DatasetManifest, SampleRecord, save_bank, save_manifest

IMAGE_SIZE = 224
LABEL_RULE_INDICES = (0, 1, 2)
BACKGROUND_LEVEL = 115.0

# Attribute slots, in bank order. Concepts beyond the named slots map to
# bright marker tiles at distinct positions along the top edge.
_CANONICAL_KEYS = (
    ("spiky_boundary", "boundary"),
    ("bright_interior", "intensity"),
    ("striped_texture", "texture"),
    ("halo_ring", "periphery"),
    ("bright_dots", "foci"),
    ("edge_band", "background"),
)


class SyntheticError(ValueError):
    pass


def default_bank(n_concepts: int, bank_id: str = "synthetic") -> ConceptBank:
    """Bank whose first six keys name the canonical visual attributes."""
    if n_concepts < 4:
        raise SyntheticError(f"synthetic bank needs >= 4 concepts, got {n_concepts}")
    keyed = list(_CANONICAL_KEYS[:n_concepts])
    for i in range(len(keyed), n_concepts):
        keyed.append((f"marker_tile_{i - len(_CANONICAL_KEYS) + 1}", "marker"))
    return ConceptBank.from_keys(bank_id, keyed)


def label_from_concepts(concepts: tuple[int, ...] | list[int]) -> str:
    """Fixed logical rule: malignant iff a majority of the first three concepts is set."""
    votes = sum(concepts[i] for i in LABEL_RULE_INDICES)
    return "malignant" if votes >= 2 else "benign"


def _birads_from_concepts(concepts: tuple[int, ...]) -> str:
    votes = sum(concepts[i] for i in LABEL_RULE_INDICES)
    return {0: "2", 1: "3", 2: "4B", 3: "5"}[votes]


@dataclass(frozen=True)
class Nuisance:
    cx: float
    cy: float
    radius: float
    phase: float
    noise_seed: int


def render_sample(concepts: tuple[int, ...], nuisance: Nuisance) -> Image.Image:
    """Render one 224x224 grayscale image from a concept vector and nuisance parameters."""
    n = IMAGE_SIZE
    yy, xx = np.mgrid[0:n, 0:n].astype(np.float64)
    img = np.full((n, n), BACKGROUND_LEVEL)
    img += (yy - n / 2) * 0.03  # mild vertical gradient

    dx = xx - nuisance.cx
    dy = yy - nuisance.cy
    a = nuisance.radius * 1.15
    b = nuisance.radius * 0.85
    rho = np.sqrt((dx / a) ** 2 + (dy / b) ** 2)
    theta = np.arctan2(dy, dx)

    boundary = np.ones_like(rho)
    if concepts[0]:
        boundary = 1.0 + 0.5 * np.cos(9.0 * theta + nuisance.phase)
    inside = rho <= boundary

    interior = 190.0 if len(concepts) > 1 and concepts[1] else 60.0
    img[inside] = interior

    if len(concepts) > 2 and concepts[2]:
        stripe_rows = ((yy // 12).astype(int) % 2) == 0
        delta = 55.0 if interior < BACKGROUND_LEVEL else -55.0
        img[inside & stripe_rows] = interior + delta

    if len(concepts) > 3 and concepts[3]:
        ring = (rho > boundary) & (rho <= boundary + 10.0 / nuisance.radius)
        img[ring] = 235.0

    if len(concepts) > 4 and concepts[4]:
        for k in range(9):
            ang = nuisance.phase + k * 2.0 * np.pi / 9.0
            px = nuisance.cx + 0.55 * a * np.cos(ang)
            py = nuisance.cy + 0.55 * b * np.sin(ang)
            dot = (xx - px) ** 2 + (yy - py) ** 2 <= 9.0**2
            img[dot] = 255.0

    if len(concepts) > 5 and concepts[5]:
        img[8:48, n - 48 : n - 8] = 220.0

    for i in range(6, len(concepts)):
        if concepts[i]:
            slot = i - 6
            x0 = 8 + 24 * (slot % 8)
            y0 = 60 + 24 * (slot // 8)
            img[y0 : y0 + 14, x0 : x0 + 14] = 235.0

    noise = np.random.RandomState(nuisance.noise_seed).normal(0.0, 6.0, size=(n, n))
    img = np.clip(img + noise, 0, 255).astype(np.uint8)
    return Image.fromarray(img, mode="L")


def synth_generate(
    n: int,
    bank: ConceptBank,
    seed: int,
    out_dir: Path | str,
    *,
    corpus_name: str = "synthetic",
    images_per_patient: int = 2,
) -> DatasetManifest:
    """Generate n samples under out_dir: images/, manifest.csv, bank.csv, sidecar.json.

    Deterministic for a fixed seed, down to the manifest bytes. Concepts are
    sampled i.i.d. Bernoulli(1/2); nuisance variation (center, radius, phase,
    pixel noise) keeps the recognition task non-trivial without breaking the
    concept-to-attribute mapping.
    """
    if bank.size < 4:
        raise SyntheticError(f"synthetic generation needs a bank with >= 4 concepts, got {bank.size}")
    out_dir = Path(out_dir)
    images_dir = out_dir / "images"
    images_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)

    records: list[SampleRecord] = []
    sidecar_samples: dict[str, dict] = {}
    for idx in range(n):
        concepts = tuple(int(v) for v in rng.integers(0, 2, size=bank.size))
        nuisance = Nuisance(
            cx=float(rng.uniform(100, 124)),
            cy=float(rng.uniform(108, 132)),
            radius=float(rng.uniform(48, 62)),
            phase=float(rng.uniform(0, 2 * np.pi)),
            noise_seed=int(rng.integers(0, 2**31 - 1)),
        )
        sample_id = f"synth-{idx:05d}"
        image_path = images_dir / f"{sample_id}.png"
        render_sample(concepts, nuisance).save(image_path)
        label = label_from_concepts(concepts)
        records.append(
            SampleRecord(
                sample_id=sample_id,
                patient_id=f"SP{idx // images_per_patient:05d}",
                image_path=image_path,
                concepts=concepts,
                label=label,
                birads=_birads_from_concepts(concepts),
            )
        )
        sidecar_samples[sample_id] = {
            "concepts": list(concepts),
            "label": label,
            "nuisance": {
                "cx": nuisance.cx,
                "cy": nuisance.cy,
                "radius": nuisance.radius,
                "phase": nuisance.phase,
                "noise_seed": nuisance.noise_seed,
            },
        }

    manifest = DatasetManifest(records=records, bank_id=bank.bank_id, corpus_name=corpus_name)
    save_manifest(manifest, out_dir / "manifest.csv")
    save_bank(bank, out_dir / "bank.csv")
    sidecar = {
        "corpus_name": corpus_name,
        "seed": seed,
        "n": n,
        "bank_id": bank.bank_id,
        "label_rule": {"kind": "majority", "indices": list(LABEL_RULE_INDICES)},
        "samples": sidecar_samples,
    }
    (out_dir / "sidecar.json").write_text(
        json.dumps(sidecar, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return manifest


def load_sidecar(out_dir: Path | str) -> dict:
    return json.loads((Path(out_dir) / "sidecar.json").read_text(encoding="utf-8"))


def oracle_labels(sidecar: dict) -> dict[str, str]:
    """Apply the persisted label rule to the persisted concepts: the Bayes oracle."""
    rule = sidecar["label_rule"]
    if rule["kind"] != "majority":
        raise SyntheticError(f"unknown label rule '{rule['kind']}'")
    idx = rule["indices"]
    out = {}
    for sample_id, entry in sidecar["samples"].items():
        votes = sum(entry["concepts"][i] for i in idx)
        out[sample_id] = "malignant" if votes >= (len(idx) // 2 + 1) else "benign"
    return out
