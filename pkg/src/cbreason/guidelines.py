"""Registry of guideline texts that condition report generation and reasoning."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Optional


class GuidelineKind(str, Enum):
    REPORTING = "reporting"
    DIAGNOSTIC = "diagnostic"


class Modality(str, Enum):
    ULTRASOUND = "ultrasound"
    MAMMOGRAPHY = "mammography"
    FIELD_GUIDE = "field_guide"


class GuidelineLookupError(KeyError):
    pass


def text_digest(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class Guideline:
    guideline_id: str
    kind: GuidelineKind
    modality: Modality
    text: str
    version_hash: str

    def __post_init__(self) -> None:
        if not self.text:
            raise ValueError(f"guideline '{self.guideline_id}' has empty text")
        if self.version_hash != text_digest(self.text):
            raise ValueError(f"guideline '{self.guideline_id}' version hash does not match its text")

    @classmethod
    def from_text(cls, kind: GuidelineKind, modality: Modality, text: str) -> "Guideline":
        return cls(
            guideline_id=f"{modality.value}_{kind.value}",
            kind=kind,
            modality=modality,
            text=text,
            version_hash=text_digest(text),
        )


class GuidelineRegistry:
    """Immutable-after-load lookup of one guideline per (kind, modality)."""

    def __init__(self) -> None:
        self._by_pair: dict[tuple[GuidelineKind, Modality], Guideline] = {}

    def add(self, guideline: Guideline) -> None:
        pair = (guideline.kind, guideline.modality)
        if pair in self._by_pair:
            raise ValueError(f"duplicate guideline for {pair[0].value}/{pair[1].value}")
        self._by_pair[pair] = guideline

    def available(self) -> list[tuple[str, str]]:
        return sorted((k.value, m.value) for k, m in self._by_pair)

    def digests(self) -> dict[str, str]:
        return {g.guideline_id: g.version_hash for g in self._by_pair.values()}

    def __len__(self) -> int:
        return len(self._by_pair)

    @classmethod
    def from_directory(cls, directory: Path | str) -> "GuidelineRegistry":
        """Load every `<modality>_<kind>.txt` asset in a directory."""
        registry = cls()
        directory = Path(directory)
        for path in sorted(directory.glob("*.txt")):
            stem = path.stem
            matched = False
            for kind in GuidelineKind:
                suffix = f"_{kind.value}"
                if stem.endswith(suffix):
                    modality = Modality(stem[: -len(suffix)])
                    registry.add(Guideline.from_text(kind, modality, path.read_text(encoding="utf-8")))
                    matched = True
                    break
            if not matched:
                raise ValueError(f"guideline file name '{path.name}' does not follow <modality>_<kind>.txt")
        return registry


def get_guideline(
    registry: GuidelineRegistry, kind: GuidelineKind | str, modality: Modality | str
) -> Guideline:
    """Return the unique guideline for (kind, modality); stable across calls."""
    kind = GuidelineKind(kind)
    modality = Modality(modality)
    found = registry._by_pair.get((kind, modality))
    if found is None:
        raise GuidelineLookupError(
            f"no guideline for ({kind.value}, {modality.value}); available: {registry.available()}"
        )
    return found


_default_registry: Optional[GuidelineRegistry] = None


def default_registry() -> GuidelineRegistry:
    """Registry over the packaged guideline assets (cached)."""
    global _default_registry
    if _default_registry is None:
        asset_dir = resources.files("cbreason").joinpath("assets/guidelines")
        with resources.as_file(asset_dir) as directory:
            _default_registry = GuidelineRegistry.from_directory(directory)
    return _default_registry


def packaged_bank_path(name: str) -> Path:
    """Path to a packaged concept-bank fixture (breast_ultrasound, mammography, cub_birds)."""
    asset = resources.files("cbreason").joinpath(f"assets/banks/{name}.csv")
    with resources.as_file(asset) as path:
        if not path.exists():
            raise FileNotFoundError(f"no packaged bank named '{name}'")
        return path
