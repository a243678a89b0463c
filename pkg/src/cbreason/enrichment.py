"""Guideline-conditioned report enrichment with an on-disk, first-writer-wins cache."""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional, Sequence

from .clients import ClientError, GenerationClient
from .corpus.records import ConceptBank, SampleRecord
from .guidelines import Guideline, GuidelineKind

DEFAULT_AUXILIARY_TEMPLATE = "The finding in this image is confirmed to be {label}."

_CONCEPT_BLOCK_HEADER = (
    "Finally, you are given the following 'concepts' that are present in the image.\n"
)

_PROMPT_TEMPLATE = (
    "\n"
    "You are given the following {modality} <image>. {auxiliary_data}\n"
    "You are also given the following {type_of_guideline} guideline:\n"
    "\n"
    "{guideline}\n"
    "\n"
    "{concept_data}\n"
    "\n"
    "Write a report based on the image, the guideline provided, and the concepts present in the image.\n"
)


class CacheCorruptionError(RuntimeError):
    pass


def prompt_digest(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


def extract_positive_concepts(concepts: Sequence[int], bank: ConceptBank) -> list[str]:
    """Display names of the set concepts, in bank order."""
    if len(concepts) != bank.size:
        raise ValueError(
            f"concept vector length {len(concepts)} does not match bank '{bank.bank_id}' size {bank.size}"
        )
    return [bank.entries[i].display_name for i, bit in enumerate(concepts) if bit == 1]


@dataclass(frozen=True)
class EnrichmentRequest:
    """Everything the report generator is conditioned on for one sample."""

    sample: SampleRecord
    bank: ConceptBank
    guideline: Guideline
    label_text: str
    modality_text: str
    type_of_guideline: str = "reporting"
    auxiliary_text: Optional[str] = None

    def __post_init__(self) -> None:
        if self.guideline.kind is not GuidelineKind.REPORTING:
            raise ValueError(
                f"enrichment requires a reporting guideline, got kind '{self.guideline.kind.value}'"
            )

    @property
    def rendered_auxiliary(self) -> str:
        if self.auxiliary_text is not None:
            return self.auxiliary_text
        return DEFAULT_AUXILIARY_TEMPLATE.format(label=self.label_text)


def build_lvlm_prompt(request: EnrichmentRequest) -> str:
    """Render the report-generation prompt.

    The concept block lists one `<Display name>: 1` line per positive concept
    under a fixed header sentence; the guideline text is embedded whole. Pure
    and deterministic, so the prompt digest keys the cache.
    """
    concept_data = _CONCEPT_BLOCK_HEADER
    for name in extract_positive_concepts(request.sample.concepts, request.bank):
        concept_data += f"{name}: 1\n"
    return _PROMPT_TEMPLATE.format(
        modality=request.modality_text,
        auxiliary_data=request.rendered_auxiliary,
        type_of_guideline=request.type_of_guideline,
        guideline=request.guideline.text,
        concept_data=concept_data,
    )


@dataclass(frozen=True)
class EnrichedReport:
    sample_id: str
    text: str
    prompt_hash: str
    client_id: str
    created_at: str

    def __post_init__(self) -> None:
        if not self.text:
            raise ValueError(f"enriched report for '{self.sample_id}' is empty")


def _safe_token(token: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]", "_", token)


class ReportCache:
    """One text file per report plus a JSON metadata sidecar, keyed by
    (sample_id, prompt_hash, client_id). Writes are exclusive-create: the first
    writer wins and a concurrent second call becomes a hit."""

    def __init__(self, directory: Path | str):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self.hits = 0
        self.misses = 0

    def _paths(self, sample_id: str, prompt_hash: str, client_id: str) -> tuple[Path, Path]:
        stem = f"{_safe_token(sample_id)}__{_safe_token(client_id)}__{prompt_hash}"
        return self.directory / f"{stem}.txt", self.directory / f"{stem}.meta.json"

    def get(self, sample_id: str, prompt_hash: str, client_id: str) -> Optional[EnrichedReport]:
        text_path, meta_path = self._paths(sample_id, prompt_hash, client_id)
        if not text_path.exists():
            return None
        if not meta_path.exists():
            raise CacheCorruptionError(f"cache entry {text_path.name} has no metadata sidecar")
        try:
            meta = json.loads(meta_path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise CacheCorruptionError(f"cache entry {meta_path.name} is unreadable: {exc}") from exc
        for key, expected in (("sample_id", sample_id), ("prompt_hash", prompt_hash), ("client_id", client_id)):
            if meta.get(key) != expected:
                raise CacheCorruptionError(
                    f"cache entry {meta_path.name}: field '{key}' does not match its key"
                )
        return EnrichedReport(
            sample_id=sample_id,
            text=text_path.read_text(encoding="utf-8"),
            prompt_hash=prompt_hash,
            client_id=client_id,
            created_at=meta.get("created_at", ""),
        )

    def put(self, report: EnrichedReport) -> EnrichedReport:
        text_path, meta_path = self._paths(report.sample_id, report.prompt_hash, report.client_id)
        try:
            with text_path.open("x", encoding="utf-8") as fh:
                fh.write(report.text)
        except FileExistsError:
            existing = self.get(report.sample_id, report.prompt_hash, report.client_id)
            if existing is None:
                raise CacheCorruptionError(f"cache entry {text_path.name} exists but is unreadable")
            return existing
        meta = {
            "sample_id": report.sample_id,
            "prompt_hash": report.prompt_hash,
            "client_id": report.client_id,
            "created_at": report.created_at,
        }
        meta_path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return report


def enrich(client: GenerationClient, request: EnrichmentRequest, cache: ReportCache) -> EnrichedReport:
    """Produce (or fetch) the enriched report for one sample.

    A cache hit on (sample_id, prompt_hash, client_id) returns without calling
    the client, so n identical calls make at most one generation request.
    """
    prompt = build_lvlm_prompt(request)
    phash = prompt_digest(prompt)
    sample_id = request.sample.sample_id
    cached = cache.get(sample_id, phash, client.client_id)
    if cached is not None:
        cache.hits += 1
        return cached
    cache.misses += 1
    image_bytes: Optional[bytes] = None
    image_path = Path(request.sample.image_path)
    if image_path.exists():
        image_bytes = image_path.read_bytes()
    try:
        text = client.generate(prompt, image_bytes)
    except ClientError:
        raise
    except Exception as exc:
        raise ClientError(
            f"generation failed for sample '{sample_id}': {exc}", sample_id=sample_id
        ) from exc
    report = EnrichedReport(
        sample_id=sample_id,
        text=text,
        prompt_hash=phash,
        client_id=client.client_id,
        created_at=datetime.now(timezone.utc).isoformat(),
    )
    return cache.put(report)
