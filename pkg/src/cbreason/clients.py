"""Pluggable text-generation clients.

Real vision-language / reasoning services sit behind the same interface via
configuration; the deterministic stubs ship in-tree so every pipeline stage is
testable offline.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Optional, Protocol, runtime_checkable

STUB_REPORTER_ID = "stub-reporter"
STUB_REASONER_ID = "stub-reasoner"


class ClientError(RuntimeError):
    """A generation call failed; safe to retry."""

    def __init__(self, message: str, *, sample_id: Optional[str] = None, retryable: bool = True):
        super().__init__(message)
        self.sample_id = sample_id
        self.retryable = retryable


@runtime_checkable
class GenerationClient(Protocol):
    client_id: str

    def generate(self, prompt: str, image: Optional[bytes] = None) -> str: ...


_CONCEPT_LINE = re.compile(r"^(?P<name>[^:\n]+): 1$", re.MULTILINE)
_FIRST_LINE = re.compile(r"You are given the following (?P<modality>.+?) <image>\.\s*(?P<aux>.*)$", re.MULTILINE)
_SCORED_LINE = re.compile(r"^(?P<name>.+?) \((?P<score>\d+(?:\.\d+)?)%\)$", re.MULTILINE)
_DIAGNOSIS = re.compile(r"final diagnostic prediction of an AI system, which is (?P<word>[^.]+)\.")


class StubReportClient:
    """Deterministic report generator: echoes the prompted concepts in a fixed frame.

    Ignores the image attachment by design; the prompt alone determines the output.
    """

    client_id = STUB_REPORTER_ID

    def __init__(self) -> None:
        self.calls = 0

    def generate(self, prompt: str, image: Optional[bytes] = None) -> str:
        self.calls += 1
        first = _FIRST_LINE.search(prompt)
        modality = first.group("modality") if first else "image"
        aux = first.group("aux").strip() if first else ""
        names = [m.group("name") for m in _CONCEPT_LINE.finditer(prompt)]
        if names:
            findings = f"The image demonstrates the following findings: {', '.join(names)}."
        else:
            findings = "The image demonstrates no annotated findings."
        closing = (
            "Each finding is described using lexicon terminology and integrated into the"
            " overall impression, as per the guideline provided."
        )
        parts = [f"{modality.capitalize()} report.", findings]
        if aux:
            parts.append(aux)
        parts.append(closing)
        return " ".join(parts)


class StubReasoningClient:
    """Deterministic explanation generator: echoes prompt concepts and a category token.

    The canned text deliberately avoids the corpus label vocabulary so blinded
    review bundles stay clean even without redaction.
    """

    client_id = STUB_REASONER_ID

    def __init__(self) -> None:
        self.calls = 0

    def generate(self, prompt: str, image: Optional[bytes] = None) -> str:
        self.calls += 1
        names = [(m.group("name"), m.group("score")) for m in _SCORED_LINE.finditer(prompt)]
        diag = _DIAGNOSIS.search(prompt)
        diag_word = diag.group("word").strip().lower() if diag else ""
        n = len(names)
        if diag_word == "malignant":
            category = {0: "4A", 1: "4A", 2: "4B", 3: "4C"}.get(n, "5")
            follow_up = "Recommended follow-up: biopsy in line with the assigned category."
        else:
            category = "2" if n == 0 else "3"
            follow_up = "Recommended follow-up: routine screening at the usual interval."
        if names:
            detected = "; ".join(f"{name} ({score}%)" for name, score in names)
            body = (
                f"Detected findings were interpreted one by one against the guideline provided: {detected}. "
                "Taken together, the constellation of findings is consistent with the predicted category."
            )
        else:
            body = (
                "No findings crossed the reporting threshold; the assessment rests on the "
                "overall appearance as described in the guideline provided."
            )
        return f"{body} Assessment: BI-RADS {category}. {follow_up}"


@dataclass(frozen=True)
class ClientConfig:
    """Configuration block for a generation client."""

    client_id: str
    endpoint: Optional[str] = None
    timeout_s: float = 60.0
    max_retries: int = 2


def build_client(config: ClientConfig | str) -> GenerationClient:
    """Instantiate the client named by a config block (stubs ship in-tree)."""
    client_id = config if isinstance(config, str) else config.client_id
    if client_id == STUB_REPORTER_ID:
        return StubReportClient()
    if client_id == STUB_REASONER_ID:
        return StubReasoningClient()
    raise ClientError(
        f"no implementation registered for client '{client_id}'; remote clients must be "
        "provided by the deployment behind the GenerationClient interface",
        retryable=False,
    )
