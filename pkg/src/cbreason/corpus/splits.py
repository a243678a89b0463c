"""Deterministic patient-level fold assignment."""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from pathlib import Path

from .records import DatasetManifest

TRAIN_ONLY_TAG = "train_only"


class SplitError(ValueError):
    """Raised when a fold plan cannot be built or is violated."""


@dataclass(frozen=True)
class SplitPlan:
    k: int
    seed: int
    assignment: dict[str, int]

    def patients_in_fold(self, fold: int) -> tuple[str, ...]:
        return tuple(p for p, f in self.assignment.items() if f == fold)


def make_patient_folds(manifest: DatasetManifest, k: int, seed: int) -> SplitPlan:
    """Assign every patient to exactly one of k folds, balanced in patient count.

    All images of a patient land in the same fold, so no identity can leak
    across the train/test boundary. Deterministic for a fixed seed.
    """
    if k < 2:
        raise SplitError(f"fold count must be >= 2, got {k}")
    tags_by_patient: dict[str, set[str | None]] = {}
    for r in manifest.records:
        tags_by_patient.setdefault(r.patient_id, set()).add(r.split_tag)
    for patient, tags in tags_by_patient.items():
        if TRAIN_ONLY_TAG in tags and len(tags) > 1:
            raise SplitError(
                f"patient '{patient}' mixes '{TRAIN_ONLY_TAG}' and fold-eligible samples"
            )
    patients = sorted(tags_by_patient)
    if len(patients) < k:
        raise SplitError(f"need at least k={k} distinct patients, found {len(patients)}")
    rng = random.Random(seed)
    rng.shuffle(patients)
    assignment = {p: i % k for i, p in enumerate(patients)}
    return SplitPlan(k=k, seed=seed, assignment=assignment)


def fold_members(
    manifest: DatasetManifest, plan: SplitPlan, fold: int
) -> tuple[list[str], list[str]]:
    """Return (train_sample_ids, eval_sample_ids) for one fold.

    Samples tagged train_only join every training split and never the
    evaluation split.
    """
    if not 0 <= fold < plan.k:
        raise SplitError(f"fold {fold} outside [0, {plan.k})")
    train: list[str] = []
    eval_: list[str] = []
    for r in manifest.records:
        if r.patient_id not in plan.assignment:
            raise SplitError(f"patient '{r.patient_id}' missing from the split plan")
        in_fold = plan.assignment[r.patient_id] == fold
        if r.split_tag == TRAIN_ONLY_TAG:
            train.append(r.sample_id)
        elif in_fold:
            eval_.append(r.sample_id)
        else:
            train.append(r.sample_id)
    overlap = set(train) & set(eval_)
    if overlap:
        raise SplitError(f"train/eval overlap for fold {fold}: {sorted(overlap)[:5]}")
    return train, eval_


def save_split_plan(plan: SplitPlan, path: Path | str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {"k": plan.k, "seed": plan.seed, "assignment": plan.assignment}
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def load_split_plan(path: Path | str) -> SplitPlan:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    return SplitPlan(
        k=int(payload["k"]),
        seed=int(payload["seed"]),
        assignment={p: int(f) for p, f in payload["assignment"].items()},
    )
