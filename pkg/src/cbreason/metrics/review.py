"""Blinded case-bundle export and the sealed-key review protocol.

Bundles never contain the ground truth: the label vocabulary is redacted from
every exported text (generated explanations name the predicted class, and the
blinding contract requires bundle bytes to scan clean of those words), and no
cohort statistics are written. Truth lives only in an encoded sealed key that
unlocks exclusively after reviewer scores have been imported — case selection
and scoring stay procedurally independent.
"""

from __future__ import annotations

import base64
import json
import random
import re
import shutil
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Optional, Sequence

from .classification import PredictionSet
from .rubric import RubricScore, import_rubric_scores

REDACTION_MARK = "[withheld]"
BUNDLE_DIR_NAME = "bundles"
SEALED_KEY_NAME = "key.sealed"
SCORES_NAME = "scores.csv"
UNSEALED_KEY_NAME = "key.unsealed.json"
JOINED_NAME = "scores_with_truth.csv"


class ReviewProtocolError(RuntimeError):
    pass


@dataclass(frozen=True)
class CaseBundle:
    case_id: str
    image_ref: Optional[str]
    prompt_hash: str
    concept_lines: tuple[str, ...]
    explanation_text: str
    inferred_birads: Optional[str]
    follow_up: Optional[str]
    notes: tuple[str, ...] = ()


def redact_labels(text: str, label_names: Sequence[str]) -> str:
    """Replace every occurrence of the label vocabulary, case-insensitively."""
    out = text
    for name in label_names:
        out = re.sub(re.escape(name), REDACTION_MARK, out, flags=re.IGNORECASE)
    return out


def _bundle_from_transcript(transcript: Mapping, label_names: Sequence[str]) -> CaseBundle:
    explanation = transcript.get("explanation", {})
    redact = lambda value: redact_labels(value, label_names) if value else value
    return CaseBundle(
        case_id=transcript["case_id"],
        image_ref=transcript.get("image_ref"),
        prompt_hash=transcript["prompt_hash"],
        concept_lines=tuple(redact(line) for line in transcript.get("concept_lines", [])),
        explanation_text=redact(explanation.get("raw_text", "")),
        inferred_birads=explanation.get("inferred_birads"),
        follow_up=redact(explanation.get("follow_up")),
        notes=tuple(transcript.get("notes", [])),
    )


def export_case_bundles(
    predset: PredictionSet,
    transcripts: Mapping[str, Mapping],
    n: int,
    seed: int,
    out_dir: Path | str,
    label_names: Sequence[str] = ("benign", "malignant"),
) -> Path:
    """Export n seeded-random blinded bundles plus a sealed truth key.

    Only cases with both predictions and transcripts are eligible. The sealed
    key maps every exported case to its true label for the post-scoring join.
    """
    out_dir = Path(out_dir)
    eligible = sorted(set(predset.sample_ids) & set(transcripts))
    if n > len(eligible):
        raise ReviewProtocolError(f"requested {n} cases but only {len(eligible)} are eligible")
    selected = sorted(random.Random(seed).sample(eligible, n))

    bundle_dir = out_dir / BUNDLE_DIR_NAME
    bundle_dir.mkdir(parents=True, exist_ok=True)
    truth_by_id = dict(zip(predset.sample_ids, (int(v) for v in predset.y_true)))
    for case_id in selected:
        bundle = _bundle_from_transcript(transcripts[case_id], label_names)
        payload = {
            "case_id": bundle.case_id,
            "image_ref": bundle.image_ref,
            "prompt_hash": bundle.prompt_hash,
            "concept_lines": list(bundle.concept_lines),
            "explanation_text": bundle.explanation_text,
            "inferred_birads": bundle.inferred_birads,
            "follow_up": bundle.follow_up,
            "notes": list(bundle.notes),
        }
        (bundle_dir / f"{case_id}.json").write_text(
            json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
    (bundle_dir / "index.json").write_text(
        json.dumps({"cases": selected, "seed": seed}, indent=2) + "\n", encoding="utf-8"
    )

    key = {case_id: label_names[truth_by_id[case_id]] for case_id in selected}
    encoded = base64.b64encode(json.dumps(key, sort_keys=True).encode("utf-8")).decode("ascii")
    sealed = {"format": "sealed-review-key-v1", "payload": encoded}
    (out_dir / SEALED_KEY_NAME).write_text(json.dumps(sealed, indent=2) + "\n", encoding="utf-8")
    return out_dir


def exported_case_ids(review_dir: Path | str) -> list[str]:
    index = Path(review_dir) / BUNDLE_DIR_NAME / "index.json"
    if not index.exists():
        raise ReviewProtocolError(f"no exported bundles under {review_dir}")
    return list(json.loads(index.read_text(encoding="utf-8"))["cases"])


def import_scores(review_dir: Path | str, scores_path: Path | str) -> list[RubricScore]:
    """Validate a reviewer score file against the export and record it."""
    review_dir = Path(review_dir)
    scores = import_rubric_scores(scores_path)
    known = set(exported_case_ids(review_dir))
    unknown = sorted({s.case_id for s in scores} - known)
    if unknown:
        raise ReviewProtocolError(f"scores name cases that were never exported: {unknown}")
    shutil.copyfile(scores_path, review_dir / SCORES_NAME)
    return scores


def unseal(review_dir: Path | str) -> Path:
    """Decode the truth key and join it to the imported scores.

    Refused until a score file has been imported: selection, scoring, and
    truth-join must happen in that order.
    """
    review_dir = Path(review_dir)
    scores_file = review_dir / SCORES_NAME
    if not scores_file.exists():
        raise ReviewProtocolError(
            "refusing to unseal: no imported scores found (run the score import first)"
        )
    sealed_path = review_dir / SEALED_KEY_NAME
    if not sealed_path.exists():
        raise ReviewProtocolError(f"no sealed key at {sealed_path}")
    sealed = json.loads(sealed_path.read_text(encoding="utf-8"))
    key = json.loads(base64.b64decode(sealed["payload"]).decode("utf-8"))
    (review_dir / UNSEALED_KEY_NAME).write_text(json.dumps(key, indent=2, sort_keys=True) + "\n", encoding="utf-8")

    scores = import_rubric_scores(scores_file)
    joined = review_dir / JOINED_NAME
    with joined.open("w", encoding="utf-8") as fh:
        fh.write("case_id,y_true,cints,cigs,bas\n")
        for s in scores:
            fh.write(f"{s.case_id},{key.get(s.case_id, '')},{s.cints},{s.cigs},{s.bas}\n")
    return joined


def read_sealed_key(review_dir: Path | str) -> dict[str, str]:
    """Decode the sealed key without the protocol gate (test/verification use)."""
    sealed = json.loads((Path(review_dir) / SEALED_KEY_NAME).read_text(encoding="utf-8"))
    return json.loads(base64.b64decode(sealed["payload"]).decode("utf-8"))
