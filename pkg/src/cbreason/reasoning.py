"""Structured reasoning prompts, explanation parsing, and grounding validation."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .clients import ClientError, GenerationClient
from .corpus.records import ConceptBank
from .encoder.model import Predictions
from .enrichment import prompt_digest
from .guidelines import Guideline, GuidelineKind

BREAST_ULTRASOUND_CORPUS = "BREAST_US"
BIRADS_CATEGORIES = ("2", "3", "4A", "4B", "4C", "5")

GROUNDED = "grounded"
UNGROUNDED = "ungrounded"

_INTRO_TEMPLATE = (
    "You are given the final diagnostic prediction of an AI system, which is {diagnosis}."
    " The system also detected the following concepts:\n"
)
_INSTRUCTIONS_TEMPLATE = (
    "Assuming the diagnosis is correct, explain the implications of these concepts"
    " according to the {guideline_phrase} guideline provided. Interpret each concept,"
    " assess agreement with the predicted diagnosis, infer the most likely BI-RADS"
    " category, and provide a recommended follow-up.\n"
)

# The below-threshold irregular-shape line reports the raw score, not its
# complement; transcripts carry this note so reviewers see the convention.
IRREGULAR_SHAPE_SCORE_NOTE = (
    "The 'Irregular shape' line reports the below-threshold score of the regular-shape"
    " concept unmodified, not its complement."
)

_BIRADS_RE = re.compile(r"BI-RADS\s*:?\s*(4A|4B|4C|2|3|5)\b", re.IGNORECASE)
DEFAULT_FOLLOW_UP_KEYWORDS = ("follow-up", "biopsy", "routine screening")


@dataclass(frozen=True)
class ReasoningPrompt:
    """The four-part prompt: intro with the predicted diagnosis, concept lines,
    task instruction, and the diagnostic guideline text."""

    task_instruction: str
    diagnosis_text: str
    concept_lines: tuple[str, ...]
    guideline: Guideline
    rendered: str
    prompt_hash: str
    vocabulary: tuple[str, ...]
    corpus_name: str

    def __post_init__(self) -> None:
        expected = _render(self.diagnosis_text, self.concept_lines, self.task_instruction, self.guideline.text)
        if self.rendered != expected:
            raise ValueError("rendered prompt does not equal the canonical concatenation of its parts")
        if self.prompt_hash != prompt_digest(self.rendered):
            raise ValueError("prompt hash does not match the rendered prompt")


def _render(diagnosis: str, concept_lines: Sequence[str], instruction: str, guideline_text: str) -> str:
    intro = _INTRO_TEMPLATE.format(diagnosis=diagnosis)
    concept_data = "".join(line + "\n" for line in concept_lines)
    return f"{intro}\n{concept_data}\n{instruction}\n{guideline_text}\n"


def _single_case(pred: Union[Predictions, tuple[float, Sequence[float]]]) -> tuple[float, np.ndarray]:
    if isinstance(pred, Predictions):
        y = np.ravel(pred.y_hat)
        c = np.atleast_2d(pred.c_hat)
        if y.size != 1 or c.shape[0] != 1:
            raise ValueError("build_reasoning_prompt expects predictions for exactly one case")
        return float(y[0]), np.ravel(c[0])
    y_hat, c_hat = pred
    return float(y_hat), np.asarray(c_hat, dtype=float)


def build_reasoning_prompt(
    pred: Union[Predictions, tuple[float, Sequence[float]]],
    bank: ConceptBank,
    guideline: Guideline,
    corpus_name: str,
    *,
    label_names: Sequence[str] = ("benign", "malignant"),
    threshold: float = 0.5,
    guideline_phrase: str = "BI-RADS clinical",
) -> ReasoningPrompt:
    """Render the explanation prompt for one case.

    Concepts at or above the threshold emit `<Display name> (<score>%)` with the
    score as a percentage to one decimal. For the breast-ultrasound corpus the
    regular-shape concept below threshold instead emits an `Irregular shape`
    line carrying the same score value. Pure: identical inputs give identical
    bytes and hash.
    """
    if guideline.kind is not GuidelineKind.DIAGNOSTIC:
        raise ValueError(f"reasoning requires a diagnostic guideline, got kind '{guideline.kind.value}'")
    y_hat, c_hat = _single_case(pred)
    if len(c_hat) != bank.size:
        raise ValueError(f"{len(c_hat)} concept scores for a bank of size {bank.size}")
    diagnosis = label_names[1] if y_hat >= threshold else label_names[0]
    lines: list[str] = []
    for entry, prob in zip(bank.entries, c_hat):
        score = prob * 100
        if prob >= threshold:
            lines.append(f"{entry.display_name} ({score:.1f}%)")
        elif corpus_name == BREAST_ULTRASOUND_CORPUS and entry.key == "regular_shape":
            lines.append(f"Irregular shape ({score:.1f}%)")
    instruction = _INSTRUCTIONS_TEMPLATE.format(guideline_phrase=guideline_phrase)
    rendered = _render(diagnosis, lines, instruction, guideline.text)
    return ReasoningPrompt(
        task_instruction=instruction,
        diagnosis_text=diagnosis,
        concept_lines=tuple(lines),
        guideline=guideline,
        rendered=rendered,
        prompt_hash=prompt_digest(rendered),
        vocabulary=bank.display_names,
        corpus_name=corpus_name,
    )


@dataclass
class Explanation:
    raw_text: str
    inferred_birads: Optional[str] = None
    follow_up: Optional[str] = None
    grounding_report: list[tuple[str, str]] = None  # filled by validate_grounding


def parse_birads(text: str) -> Optional[str]:
    """Last `BI-RADS <category>` occurrence wins: reasoning traces revise earlier guesses."""
    matches = _BIRADS_RE.findall(text)
    return matches[-1].upper() if matches else None


def extract_follow_up(text: str, keywords: Sequence[str] = DEFAULT_FOLLOW_UP_KEYWORDS) -> Optional[str]:
    """The sentence containing the first keyword match."""
    sentences = re.split(r"(?<=[.!?])\s+", text)
    lowered_keywords = [k.lower() for k in keywords]
    for sentence in sentences:
        low = sentence.lower()
        if any(k in low for k in lowered_keywords):
            return sentence.strip()
    return None


def _normalize(text: str) -> str:
    return re.sub(r"\s+", " ", text.lower()).strip()


def _mentions(haystack_norm: str, term_norm: str) -> bool:
    pattern = rf"(?<![a-z0-9]){re.escape(term_norm)}(?![a-z0-9])"
    return re.search(pattern, haystack_norm) is not None


def validate_grounding(explanation: Explanation, prompt: ReasoningPrompt) -> list[tuple[str, str]]:
    """Classify every concept-bank display name mentioned in the explanation.

    A mention is grounded iff the name appears in the prompt's concept lines or
    in the guideline text (case-insensitive, whitespace-collapsed, whole word
    sequences). Ungrounded mentions are flagged, never dropped.
    """
    if not explanation.raw_text or not prompt.rendered:
        raise ValueError("grounding validation requires a non-empty explanation and prompt")
    text_norm = _normalize(explanation.raw_text)
    allowed_norm = _normalize(" \n ".join(prompt.concept_lines) + " \n " + prompt.guideline.text)
    report: list[tuple[str, str]] = []
    for name in prompt.vocabulary:
        name_norm = _normalize(name)
        if not _mentions(text_norm, name_norm):
            continue
        status = GROUNDED if _mentions(allowed_norm, name_norm) else UNGROUNDED
        report.append((name, status))
    return report


def generate_explanation(client: GenerationClient, prompt: ReasoningPrompt) -> Explanation:
    """Call the reasoning client, then parse and ground the returned text."""
    try:
        raw = client.generate(prompt.rendered)
    except ClientError:
        raise
    except Exception as exc:
        raise ClientError(f"reasoning generation failed: {exc}") from exc
    explanation = Explanation(raw_text=raw)
    explanation.inferred_birads = parse_birads(raw)
    explanation.follow_up = extract_follow_up(raw)
    explanation.grounding_report = validate_grounding(explanation, prompt)
    return explanation


def write_transcript(
    directory: Path | str,
    case_id: str,
    prompt: ReasoningPrompt,
    explanation: Explanation,
    image_ref: Optional[str] = None,
) -> Path:
    """Persist one explanation transcript: prompt hash, raw text, parsed fields."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    notes = []
    if prompt.corpus_name == BREAST_ULTRASOUND_CORPUS:
        notes.append(IRREGULAR_SHAPE_SCORE_NOTE)
    payload = {
        "case_id": case_id,
        "image_ref": image_ref,
        "prompt_hash": prompt.prompt_hash,
        "diagnosis_text": prompt.diagnosis_text,
        "concept_lines": list(prompt.concept_lines),
        "explanation": {
            "raw_text": explanation.raw_text,
            "inferred_birads": explanation.inferred_birads,
            "follow_up": explanation.follow_up,
            "grounding_report": [list(pair) for pair in (explanation.grounding_report or [])],
        },
        "notes": notes,
    }
    path = directory / f"{case_id}.json"
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def load_transcript(path: Path | str) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))
