"""Prompt rendering: verbatim anchors, determinism, and the lexical gate."""

from __future__ import annotations

import pytest
from hypothesis import given, strategies as st

from agrivqa.errors import ConfigError
from agrivqa.prompts import (
    BannedTermLexicon,
    CAPTION_EXEMPLARS,
    DEFAULT_LEXICON,
    Exemplar,
    ExemplarSet,
    KNOWLEDGE_EXEMPLARS,
    PromptLibrary,
    detect_banned_terms,
    substitute,
)
from agrivqa.records import TaskKind

LIB = PromptLibrary()


# -- caption prompt ----------------------------------------------------------


def test_caption_prompt_contains_pustule_exemplar():
    rendered = LIB.render_caption_prompt(CAPTION_EXEMPLARS, image="x.jpg")
    assert "orange-brown pustules scattered on the surface" in rendered.text()
    assert "without identifying the plant or disease names" in rendered.system


def test_caption_prompt_empty_exemplars_has_no_demonstrations():
    empty = ExemplarSet(TaskKind.RECOGNITION, ())
    rendered = LIB.render_caption_prompt(empty, image="x.jpg")
    assert len(rendered.turns) == 1  # just the live user turn
    assert rendered.turns[0].role == "user"


def test_caption_prompt_deterministic():
    a = LIB.render_caption_prompt(CAPTION_EXEMPLARS, image="x.jpg")
    b = LIB.render_caption_prompt(CAPTION_EXEMPLARS, image="x.jpg")
    assert a.text() == b.text()


# -- vqa prompt ----------------------------------------------------------------


def test_vqa_recognition_system_rule():
    rendered = LIB.render_vqa_prompt(
        TaskKind.RECOGNITION, "C", "Q", ExemplarSet(TaskKind.RECOGNITION, ())
    )
    assert "Answer1: Focus on PEST/DISEASE identification" in rendered.system


def test_vqa_knowledge_system_skill():
    rendered = LIB.render_vqa_prompt(
        TaskKind.KNOWLEDGE, "C", "Q", ExemplarSet(TaskKind.KNOWLEDGE, ())
    )
    assert "rotate modes of action" in rendered.system


def test_vqa_user_turn_template():
    rendered = LIB.render_vqa_prompt(
        TaskKind.RECOGNITION, "C", "Q", ExemplarSet(TaskKind.RECOGNITION, ())
    )
    live = rendered.turns[-1]
    assert live.parts[0].text == "Background(image_caption): C\nQuestion: Q"


def test_vqa_exemplars_interleaved_before_live_turn():
    rendered = LIB.render_vqa_prompt(
        TaskKind.KNOWLEDGE, "C", "Q", KNOWLEDGE_EXEMPLARS.select(2)
    )
    # 2 exemplars -> 2 user + 2 assistant turns, then the live user turn.
    assert [t.role for t in rendered.turns] == ["user", "assistant", "user", "assistant", "user"]
    assert "Seed dressing: 0.03-0.04% triazolone" in rendered.text()


def test_vqa_exemplar_without_answer_rejected():
    bad = ExemplarSet(TaskKind.RECOGNITION, (Exemplar(question="q"),))
    with pytest.raises(ConfigError):
        LIB.render_vqa_prompt(TaskKind.RECOGNITION, "C", "Q", bad)


def test_vqa_shot_count_honored_exactly():
    for n in range(0, 4):
        chosen = KNOWLEDGE_EXEMPLARS.select(n)
        rendered = LIB.render_vqa_prompt(TaskKind.KNOWLEDGE, "C", "Q", chosen)
        assert len(rendered.turns) == 2 * n + 1


# -- judge prompt --------------------------------------------------------------


def test_judge_diagnosis_criteria_listed():
    rendered = LIB.render_judge_prompt(
        TaskKind.RECOGNITION, "Q", "C", None, "X", "Y"
    )
    assert "Accuracy of Plant Identification" in rendered.system
    assert "Compare Answer 1 and Answer 2" in rendered.system


def test_judge_knowledge_has_five_criteria():
    rendered = LIB.render_judge_prompt(TaskKind.KNOWLEDGE, "Q", "C", None, "X", "Y")
    for name in ("Accuracy", "Completeness", "Specificity", "Practicality", "Scientific Validity"):
        assert name in rendered.system


def test_judge_swap_presents_second_candidate_first():
    rendered = LIB.render_judge_prompt(
        TaskKind.RECOGNITION, "Q", "C", None, "X", "Y", order="swapped"
    )
    user = rendered.turns[0].parts[0].text
    assert "Answer 1: Y" in user
    assert "Answer 2: X" in user


def test_judge_prompt_never_contains_image_reference():
    rendered = LIB.render_judge_prompt(
        TaskKind.RECOGNITION, "Q", "caption about leaf.jpg scene", "ref", "X", "Y"
    )
    assert not any(
        part for turn in rendered.turns for part in turn.parts
        if type(part).__name__ == "ImagePart"
    )
    assert "[image:" not in rendered.text()


def test_judge_reference_block_included_when_present():
    with_ref = LIB.render_judge_prompt(TaskKind.RECOGNITION, "Q", "C", "the gold", "X", "Y")
    without = LIB.render_judge_prompt(TaskKind.RECOGNITION, "Q", "C", None, "X", "Y")
    assert "Reference Answer: the gold" in with_ref.turns[0].parts[0].text
    assert "Reference Answer" not in without.turns[0].parts[0].text


def test_judge_rejects_empty_candidates():
    with pytest.raises(ConfigError):
        LIB.render_judge_prompt(TaskKind.RECOGNITION, "Q", "C", None, "", "Y")


# -- substitution & overrides ---------------------------------------------------


def test_substitute_leaves_json_braces_alone():
    out = substitute('{"a": 1} {name} {"b": 2}', name="X")
    assert out == '{"a": 1} X {"b": 2}'


def test_template_override_from_directory(tmp_path):
    (tmp_path / "caption_user.txt").write_text("OVERRIDDEN", encoding="utf-8")
    lib = PromptLibrary(tmp_path)
    rendered = lib.render_caption_prompt(ExemplarSet(TaskKind.RECOGNITION, ()), image="x")
    assert rendered.turns[-1].parts[0].text == "OVERRIDDEN"


def test_unknown_template_override_rejected(tmp_path):
    (tmp_path / "not_a_template.txt").write_text("x", encoding="utf-8")
    with pytest.raises(ConfigError):
        PromptLibrary(tmp_path)


# -- exemplar selection ----------------------------------------------------------


def test_select_seeded_draw_reproducible():
    from random import Random

    a = KNOWLEDGE_EXEMPLARS.select(2, rng=Random(42))
    b = KNOWLEDGE_EXEMPLARS.select(2, rng=Random(42))
    assert a.exemplars == b.exemplars
    assert len(a) == 2


# -- banned terms -------------------------------------------------------------


def test_crop_name_hit():
    lexicon = BannedTermLexicon.build(crop_names=["wheat"])
    hits = detect_banned_terms("The wheat leaf shows pustules", lexicon)
    assert len(hits) == 1
    hit = hits[0]
    assert hit.category == "crop_names"
    assert hit.term == "wheat"
    assert "The wheat leaf shows pustules"[hit.span[0] : hit.span[1]].lower() == "wheat"


def test_compliant_caption_passes_default_lexicon():
    assert detect_banned_terms("slender linear blade with parallel venation", DEFAULT_LEXICON) == []


def test_disease_phrase_hit():
    lexicon = BannedTermLexicon.build(disease_names=["late blight"])
    hits = detect_banned_terms("lesion morphology typical of late blight", lexicon)
    assert len(hits) == 1
    assert hits[0].category == "disease_names"
    assert hits[0].term == "late blight"


def test_indirect_cue_substring_hit():
    hits = detect_banned_terms(
        "distribution consistent with a biotrophic pathogen", DEFAULT_LEXICON
    )
    assert any(h.category == "indirect_cues" and h.term == "consistent with" for h in hits)


def test_whole_word_matching_for_names():
    lexicon = BannedTermLexicon.build(crop_names=["corn"])
    assert detect_banned_terms("lesions in the corner of the leaf", lexicon) == []
    assert len(detect_banned_terms("a corn leaf", lexicon)) == 1


def test_case_insensitive_matching():
    lexicon = BannedTermLexicon.build(crop_names=["wheat"])
    hits = detect_banned_terms("WHEAT blade with rust-colored dots", lexicon)
    assert len(hits) == 1


def test_lexicon_entries_must_be_lowercase():
    with pytest.raises(ConfigError):
        BannedTermLexicon.build(crop_names=["Wheat"])


@given(
    st.text(
        alphabet=st.characters(whitelist_categories=("Lu", "Ll", "Zs"), max_codepoint=0x2FF),
        min_size=1,
        max_size=120,
    )
)
def test_detection_sound_with_respect_to_lexicon(caption: str):
    """Every reported span slices to its term, lowercased."""
    hits = detect_banned_terms(caption, DEFAULT_LEXICON)
    for hit in hits:
        start, end = hit.span
        assert caption[start:end].lower() == hit.term
