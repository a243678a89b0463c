from __future__ import annotations

import numpy as np
import pytest

from cbreason.clients import build_client
from cbreason.corpus import default_bank
from cbreason.guidelines import default_registry, get_guideline
from cbreason.reasoning import (
    BREAST_ULTRASOUND_CORPUS,
    GROUNDED,
    UNGROUNDED,
    Explanation,
    build_reasoning_prompt,
    extract_follow_up,
    generate_explanation,
    parse_birads,
    validate_grounding,
    write_transcript,
)

from .conftest import golden_text


@pytest.fixture(scope="module")
def diagnostic_guideline():
    return get_guideline(default_registry(), "diagnostic", "ultrasound")


def us_scores(ultrasound_bank, **overrides):
    c_hat = np.full(ultrasound_bank.size, 0.05)
    for key, value in overrides.items():
        c_hat[ultrasound_bank.index_of(key)] = value
    return c_hat


def test_prompt_matches_golden(ultrasound_bank, diagnostic_guideline):
    c_hat = us_scores(ultrasound_bank, spiculated=0.91, hypoechoic=0.84, regular_shape=0.20)
    prompt = build_reasoning_prompt((0.93, c_hat), ultrasound_bank, diagnostic_guideline, BREAST_ULTRASOUND_CORPUS)
    assert prompt.rendered == golden_text("lrm_prompt_fixture.txt")


def test_score_formatting_one_decimal(ultrasound_bank, diagnostic_guideline):
    c_hat = us_scores(ultrasound_bank, spiculated=0.91)
    prompt = build_reasoning_prompt((0.9, c_hat), ultrasound_bank, diagnostic_guideline, BREAST_ULTRASOUND_CORPUS)
    assert "Spiculated (91.0%)" in prompt.concept_lines


def test_regular_shape_below_threshold_prints_irregular(ultrasound_bank, diagnostic_guideline):
    c_hat = us_scores(ultrasound_bank, regular_shape=0.20)
    prompt = build_reasoning_prompt((0.9, c_hat), ultrasound_bank, diagnostic_guideline, BREAST_ULTRASOUND_CORPUS)
    assert "Irregular shape (20.0%)" in prompt.concept_lines
    assert not any(line.startswith("Regular shape") for line in prompt.concept_lines)


def test_regular_shape_branch_only_for_breast_us(ultrasound_bank, diagnostic_guideline):
    c_hat = us_scores(ultrasound_bank, regular_shape=0.20)
    prompt = build_reasoning_prompt((0.9, c_hat), ultrasound_bank, diagnostic_guideline, "OTHER_CORPUS")
    assert prompt.concept_lines == ()


def test_all_below_threshold_still_renders(diagnostic_guideline):
    bank = default_bank(6)
    prompt = build_reasoning_prompt((0.1, np.full(6, 0.2)), bank, diagnostic_guideline, "synthetic")
    assert prompt.concept_lines == ()
    assert prompt.rendered == golden_text("lrm_prompt_all_below.txt")
    assert "The system also detected the following concepts:" in prompt.rendered


def test_prompt_is_pure(ultrasound_bank, diagnostic_guideline):
    c_hat = us_scores(ultrasound_bank, halo=0.7)
    a = build_reasoning_prompt((0.6, c_hat), ultrasound_bank, diagnostic_guideline, BREAST_ULTRASOUND_CORPUS)
    b = build_reasoning_prompt((0.6, c_hat), ultrasound_bank, diagnostic_guideline, BREAST_ULTRASOUND_CORPUS)
    assert a.rendered == b.rendered
    assert a.prompt_hash == b.prompt_hash


def test_threshold_crossing_adds_exactly_one_line(ultrasound_bank, diagnostic_guideline):
    below = us_scores(ultrasound_bank, spiculated=0.49)
    above = us_scores(ultrasound_bank, spiculated=0.51)
    p_below = build_reasoning_prompt((0.9, below), ultrasound_bank, diagnostic_guideline, "OTHER")
    p_above = build_reasoning_prompt((0.9, above), ultrasound_bank, diagnostic_guideline, "OTHER")
    assert len(p_above.concept_lines) == len(p_below.concept_lines) + 1
    added = set(p_above.concept_lines) - set(p_below.concept_lines)
    assert added == {"Spiculated (51.0%)"}
    diff = set(p_above.rendered.splitlines()) ^ set(p_below.rendered.splitlines())
    assert diff == {"Spiculated (51.0%)"}


def test_exact_threshold_included(ultrasound_bank, diagnostic_guideline):
    c_hat = us_scores(ultrasound_bank, halo=0.5)
    prompt = build_reasoning_prompt((0.9, c_hat), ultrasound_bank, diagnostic_guideline, "OTHER")
    assert "Halo (50.0%)" in prompt.concept_lines


def test_diagnosis_word_follows_threshold(ultrasound_bank, diagnostic_guideline):
    c_hat = us_scores(ultrasound_bank)
    low = build_reasoning_prompt((0.2, c_hat), ultrasound_bank, diagnostic_guideline, "OTHER")
    high = build_reasoning_prompt((0.8, c_hat), ultrasound_bank, diagnostic_guideline, "OTHER")
    assert "which is benign." in low.rendered
    assert "which is malignant." in high.rendered


def test_requires_diagnostic_guideline(ultrasound_bank):
    reporting = get_guideline(default_registry(), "reporting", "ultrasound")
    with pytest.raises(ValueError, match="diagnostic"):
        build_reasoning_prompt((0.5, us_scores(ultrasound_bank)), ultrasound_bank, reporting, "OTHER")


# --- parsing ---------------------------------------------------------------


def test_birads_extraction_simple():
    assert parse_birads("The case is best described as BI-RADS 4B overall.") == "4B"


def test_birads_last_occurrence_wins():
    text = "Initially BI-RADS 3 seems right. On reflection, BI-RADS 4C fits the findings."
    assert parse_birads(text) == "4C"


def test_birads_absent_is_none():
    assert parse_birads("No category token appears anywhere here.") is None


def test_birads_case_insensitive():
    assert parse_birads("bi-rads 4a") == "4A"


def test_follow_up_sentence_extraction():
    text = "Findings are suspicious. Biopsy is recommended within two weeks. Other text."
    assert extract_follow_up(text) == "Biopsy is recommended within two weeks."
    assert extract_follow_up("Nothing actionable here.") is None


# --- grounding --------------------------------------------------------------


def test_grounded_when_only_prompted_concepts(ultrasound_bank, diagnostic_guideline):
    c_hat = us_scores(ultrasound_bank, halo=0.8)
    prompt = build_reasoning_prompt((0.9, c_hat), ultrasound_bank, diagnostic_guideline, "OTHER")
    explanation = Explanation(raw_text="The halo finding suggests boundary infiltration.")
    report = validate_grounding(explanation, prompt)
    assert report == [("Halo", GROUNDED)]


def test_unprompted_absent_term_is_ungrounded(diagnostic_guideline):
    bank = default_bank(8)
    c_hat = np.array([0.9] * 6 + [0.1, 0.1])  # marker tiles stay below threshold
    prompt = build_reasoning_prompt((0.9, c_hat), bank, diagnostic_guideline, "synthetic")
    explanation = Explanation(raw_text="There is a suspicious bright interior and an unexpected Marker tile 1.")
    report = dict(validate_grounding(explanation, prompt))
    assert report["Bright interior"] == GROUNDED
    assert report["Marker tile 1"] == UNGROUNDED


def test_guideline_mention_counts_as_grounded(ultrasound_bank, diagnostic_guideline):
    # "Calcifications" appears in the diagnostic guideline text, so a mention
    # is grounded even when the concept line is absent
    prompt = build_reasoning_prompt((0.9, us_scores(ultrasound_bank)), ultrasound_bank, diagnostic_guideline, "OTHER")
    explanation = Explanation(raw_text="Calcifications within a mass raise concern.")
    assert dict(validate_grounding(explanation, prompt))["Calcifications"] == GROUNDED


def test_grounding_is_case_insensitive(ultrasound_bank, diagnostic_guideline):
    c_hat = us_scores(ultrasound_bank, spiculated=0.9)
    prompt = build_reasoning_prompt((0.9, c_hat), ultrasound_bank, diagnostic_guideline, "OTHER")
    for casing in ("spiculated", "SPICULATED", "Spiculated", "sPiCuLaTeD"):
        explanation = Explanation(raw_text=f"The margin is {casing} on review.")
        assert dict(validate_grounding(explanation, prompt))["Spiculated"] == GROUNDED


def test_grounding_never_blesses_absent_terms(diagnostic_guideline):
    # mentions can only be grounded by the concept lines or the guideline text
    bank = default_bank(8)
    rng = np.random.default_rng(0)
    for _ in range(10):
        c_hat = rng.uniform(0, 1, size=8)
        prompt = build_reasoning_prompt((0.9, c_hat), bank, diagnostic_guideline, "synthetic")
        allowed = " ".join(prompt.concept_lines).lower() + " " + prompt.guideline.text.lower()
        mentioned = " and ".join(bank.display_names)
        report = validate_grounding(Explanation(raw_text=mentioned), prompt)
        for term, status in report:
            if status == GROUNDED:
                assert term.lower() in allowed


def test_substring_names_do_not_cross_match(diagnostic_guideline):
    from cbreason.corpus import ConceptBank

    bank = ConceptBank.from_keys("b", [("regular_shape", "shape"), ("halo_ring", "ring")])
    prompt = build_reasoning_prompt((0.9, np.array([0.9, 0.1])), bank, diagnostic_guideline, "OTHER")
    explanation = Explanation(raw_text="An irregular shape is suspected.")
    # "irregular shape" must not count as a mention of "Regular shape"
    assert validate_grounding(explanation, prompt) == []


# --- stub client integration -------------------------------------------------


def test_stub_explanation_parses_end_to_end(ultrasound_bank, diagnostic_guideline, tmp_path):
    c_hat = us_scores(ultrasound_bank, spiculated=0.91, hypoechoic=0.84)
    prompt = build_reasoning_prompt((0.93, c_hat), ultrasound_bank, diagnostic_guideline, BREAST_ULTRASOUND_CORPUS)
    explanation = generate_explanation(build_client("stub-reasoner"), prompt)
    assert "Spiculated" in explanation.raw_text
    assert explanation.inferred_birads in {"2", "3", "4A", "4B", "4C", "5"}
    assert explanation.follow_up is not None
    assert all(status == GROUNDED for _, status in explanation.grounding_report)
    path = write_transcript(tmp_path, "case-1", prompt, explanation, image_ref="img.png")
    payload = path.read_text(encoding="utf-8")
    assert prompt.prompt_hash in payload
    assert "Irregular shape" in payload  # note about the raw below-threshold score
