from __future__ import annotations

import pytest

from cbreason.guidelines import (
    Guideline,
    GuidelineKind,
    GuidelineLookupError,
    GuidelineRegistry,
    Modality,
    default_registry,
    get_guideline,
    text_digest,
)


def test_reporting_ultrasound_contains_lexicon_heading():
    g = get_guideline(default_registry(), "reporting", "ultrasound")
    assert "SUCCINCT DESCRIPTION OF THE OVERALL BREAST COMPOSITION" in g.text


def test_diagnostic_ultrasound_contains_title():
    g = get_guideline(default_registry(), "diagnostic", "ultrasound")
    assert "BI-RADS Ultrasound Diagnostic" in g.text


def test_every_kind_modality_pair_available():
    registry = default_registry()
    assert len(registry) == 6
    for kind in GuidelineKind:
        for modality in Modality:
            assert get_guideline(registry, kind, modality).text


def test_empty_registry_lookup_error_lists_available():
    registry = GuidelineRegistry()
    with pytest.raises(GuidelineLookupError, match="available"):
        get_guideline(registry, GuidelineKind.DIAGNOSTIC, Modality.FIELD_GUIDE)


def test_version_hash_changes_iff_text_changes():
    a = Guideline.from_text(GuidelineKind.REPORTING, Modality.ULTRASOUND, "text one")
    b = Guideline.from_text(GuidelineKind.REPORTING, Modality.ULTRASOUND, "text one")
    c = Guideline.from_text(GuidelineKind.REPORTING, Modality.ULTRASOUND, "text two")
    assert a.version_hash == b.version_hash
    assert a.version_hash != c.version_hash


def test_hash_is_recomputable_from_text():
    g = get_guideline(default_registry(), "diagnostic", "mammography")
    assert g.version_hash == text_digest(g.text)


def test_registry_load_is_idempotent():
    assert default_registry().digests() == default_registry().digests()


def test_duplicate_pair_rejected():
    registry = GuidelineRegistry()
    registry.add(Guideline.from_text(GuidelineKind.REPORTING, Modality.ULTRASOUND, "x"))
    with pytest.raises(ValueError, match="duplicate"):
        registry.add(Guideline.from_text(GuidelineKind.REPORTING, Modality.ULTRASOUND, "y"))


def test_empty_text_rejected():
    with pytest.raises(ValueError, match="empty"):
        Guideline.from_text(GuidelineKind.REPORTING, Modality.ULTRASOUND, "")


def test_stale_hash_rejected():
    with pytest.raises(ValueError, match="hash"):
        Guideline(
            guideline_id="x",
            kind=GuidelineKind.REPORTING,
            modality=Modality.ULTRASOUND,
            text="fresh",
            version_hash=text_digest("stale"),
        )
