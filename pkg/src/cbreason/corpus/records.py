"""Sample records, concept banks, and delimited manifest I/O."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

BIRADS_GRADES = ("2", "3", "4A", "4B", "4C", "5")
DEFAULT_LABEL_SET = ("benign", "malignant")

MANIFEST_COLUMNS = ("sample_id", "patient_id", "image_path", "label", "birads", "concepts")
BANK_COLUMNS = ("key", "display_name", "category")


class ManifestError(ValueError):
    """Raised when a manifest or bank file violates its schema."""


class BankError(ValueError):
    """Raised when a concept bank definition is inconsistent."""


def display_name_for_key(key: str) -> str:
    """Render a snake_case concept key for prompts: underscores to spaces, first letter capitalized."""
    return key.replace("_", " ").capitalize()


@dataclass(frozen=True)
class ConceptEntry:
    key: str
    display_name: str
    category: str


@dataclass(frozen=True)
class ConceptBank:
    """Ordered, named concepts. The index of an entry is the identity of that concept."""

    bank_id: str
    entries: tuple[ConceptEntry, ...]

    def __post_init__(self) -> None:
        keys = [e.key for e in self.entries]
        if len(set(keys)) != len(keys):
            dupes = sorted({k for k in keys if keys.count(k) > 1})
            raise BankError(f"bank '{self.bank_id}': duplicate concept keys {dupes}")
        for e in self.entries:
            if not e.key or e.key != e.key.lower() or " " in e.key:
                raise BankError(f"bank '{self.bank_id}': key '{e.key}' is not snake_case")
            expected = display_name_for_key(e.key)
            if e.display_name != expected:
                raise BankError(
                    f"bank '{self.bank_id}': display name '{e.display_name}' for key "
                    f"'{e.key}' does not match the derivation rule ('{expected}')"
                )

    @property
    def size(self) -> int:
        return len(self.entries)

    @property
    def keys(self) -> tuple[str, ...]:
        return tuple(e.key for e in self.entries)

    @property
    def display_names(self) -> tuple[str, ...]:
        return tuple(e.display_name for e in self.entries)

    def index_of(self, key: str) -> int:
        for i, e in enumerate(self.entries):
            if e.key == key:
                return i
        raise KeyError(f"concept key '{key}' not in bank '{self.bank_id}'")

    @classmethod
    def from_keys(cls, bank_id: str, keyed: Sequence[tuple[str, str]]) -> "ConceptBank":
        """Build a bank from (key, category) pairs, deriving display names."""
        entries = tuple(ConceptEntry(k, display_name_for_key(k), c) for k, c in keyed)
        return cls(bank_id=bank_id, entries=entries)


@dataclass(frozen=True)
class SampleRecord:
    sample_id: str
    patient_id: str
    image_path: Path
    concepts: tuple[int, ...]
    label: str
    birads: Optional[str] = None
    split_tag: Optional[str] = None


@dataclass
class DatasetManifest:
    records: list[SampleRecord]
    bank_id: str
    corpus_name: str
    label_set: tuple[str, ...] = DEFAULT_LABEL_SET

    def __len__(self) -> int:
        return len(self.records)

    @property
    def patient_ids(self) -> tuple[str, ...]:
        seen: dict[str, None] = {}
        for r in self.records:
            seen.setdefault(r.patient_id, None)
        return tuple(seen)

    def label_index(self, label: str) -> int:
        return self.label_set.index(label)

    def by_sample_id(self) -> dict[str, SampleRecord]:
        return {r.sample_id: r for r in self.records}


def load_bank(path: Path | str, bank_id: Optional[str] = None) -> ConceptBank:
    """Load a concept-bank definition file (header + key,display_name,category rows)."""
    path = Path(path)
    if not path.exists():
        raise BankError(f"bank file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        rows = [row for row in reader if row and not row[0].startswith("#")]
    if not rows or tuple(rows[0]) != BANK_COLUMNS:
        raise BankError(f"{path}: first row must be the header {','.join(BANK_COLUMNS)}")
    entries = []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != 3:
            raise BankError(f"{path}: row {lineno}: expected 3 columns, got {len(row)}")
        entries.append(ConceptEntry(row[0], row[1], row[2]))
    return ConceptBank(bank_id=bank_id or path.stem, entries=tuple(entries))


def save_bank(bank: ConceptBank, path: Path | str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(BANK_COLUMNS)
        for e in bank.entries:
            writer.writerow([e.key, e.display_name, e.category])
    return path


def _parse_concepts(raw: str, bank: ConceptBank, sample_id: str, lineno: int) -> tuple[int, ...]:
    if set(raw) - {"0", "1"}:
        raise ManifestError(f"row {lineno}: field 'concepts': expected a 0/1 string, got '{raw}'")
    if len(raw) != bank.size:
        raise ManifestError(
            f"row {lineno}: sample '{sample_id}': concept vector length {len(raw)} "
            f"does not match bank '{bank.bank_id}' size {bank.size}"
        )
    return tuple(int(ch) for ch in raw)


def load_manifest(
    path: Path | str,
    bank: ConceptBank,
    *,
    corpus_name: Optional[str] = None,
    label_set: Sequence[str] = DEFAULT_LABEL_SET,
    check_images: bool = True,
) -> DatasetManifest:
    """Load and validate a delimited manifest against a concept bank.

    Every row is checked for schema shape, label membership, concept-vector
    length, and (optionally) image existence. Errors name the offending row
    and field so annotation bugs surface instead of being clamped away.
    """
    path = Path(path)
    if not path.exists():
        raise ManifestError(f"manifest not found: {path}")
    base = path.parent
    label_set = tuple(label_set)
    records: list[SampleRecord] = []
    seen_ids: set[str] = set()
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ManifestError(f"{path}: empty manifest") from None
        if tuple(header[: len(MANIFEST_COLUMNS)]) != MANIFEST_COLUMNS:
            raise ManifestError(
                f"{path}: header must start with {','.join(MANIFEST_COLUMNS)}, got {','.join(header)}"
            )
        has_split_tag = len(header) > 6 and header[6] == "split_tag"
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) < len(MANIFEST_COLUMNS):
                raise ManifestError(f"row {lineno}: expected at least {len(MANIFEST_COLUMNS)} columns, got {len(row)}")
            sample_id, patient_id, image_path, label, birads, concepts_raw = row[:6]
            if not sample_id:
                raise ManifestError(f"row {lineno}: field 'sample_id': must be non-empty")
            if sample_id in seen_ids:
                raise ManifestError(f"row {lineno}: field 'sample_id': duplicate id '{sample_id}'")
            seen_ids.add(sample_id)
            if not patient_id:
                raise ManifestError(f"row {lineno}: field 'patient_id': must be non-empty")
            if label not in label_set:
                raise ManifestError(
                    f"row {lineno}: field 'label': '{label}' not in label set {list(label_set)}"
                )
            if birads and birads not in BIRADS_GRADES:
                raise ManifestError(
                    f"row {lineno}: field 'birads': '{birads}' not one of {list(BIRADS_GRADES)}"
                )
            concepts = _parse_concepts(concepts_raw, bank, sample_id, lineno)
            resolved = Path(image_path)
            if not resolved.is_absolute():
                resolved = base / resolved
            if check_images and not resolved.exists():
                raise ManifestError(
                    f"row {lineno}: field 'image_path': file not found: {resolved}"
                )
            split_tag = row[6] if has_split_tag and len(row) > 6 and row[6] else None
            records.append(
                SampleRecord(
                    sample_id=sample_id,
                    patient_id=patient_id,
                    image_path=resolved,
                    concepts=concepts,
                    label=label,
                    birads=birads or None,
                    split_tag=split_tag,
                )
            )
    return DatasetManifest(
        records=records,
        bank_id=bank.bank_id,
        corpus_name=corpus_name or path.stem,
        label_set=label_set,
    )


def save_manifest(manifest: DatasetManifest, path: Path | str) -> Path:
    """Write a manifest; image paths are stored relative to the manifest when possible."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    base = path.parent.resolve()
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(MANIFEST_COLUMNS + ("split_tag",))
        for r in manifest.records:
            img = Path(r.image_path)
            try:
                img_out = img.resolve().relative_to(base)
            except ValueError:
                img_out = img
            writer.writerow(
                [
                    r.sample_id,
                    r.patient_id,
                    str(img_out),
                    r.label,
                    r.birads or "",
                    "".join(str(b) for b in r.concepts),
                    r.split_tag or "",
                ]
            )
    return path
