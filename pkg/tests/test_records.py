"""Record schema: parsing, round-trip identity, and stage invariants."""

from __future__ import annotations

import json

import pytest
from hypothesis import given, strategies as st

from agrivqa.errors import RecordParseError, RecordValidationError
from agrivqa.records import (
    PipelineRecord,
    load_records,
    parse_record,
    serialize_record,
    write_records,
)

# The published end-to-end example record after stage 3.
EXAMPLE_RECORD = {
    "question_id": "test_0001",
    "image": "leaf.jpg",
    "question": "Is this crop diseased?",
    "image_caption": (
        "Compound pinnate leaf exhibiting dark brown circular lesions "
        "(3-8 mm) with yellow halos..."
    ),
    "rating": 9,
    "generation_answer1": "Yes, bacterial necrotic lesions...",
    "generation_answer2": "Yes, compound pinnate leaf showing...",
    "generation_answer": "Yes, bacterial necrotic lesions...",
    "selected_answer": "answer1",
    "selected_score": 4.7,
    "unselected_score": 3.2,
    "evaluation_reason": (
        "Answer 1 provides specific disease identification with detailed "
        "symptom description."
    ),
}

EXAMPLE_JSON = json.dumps(EXAMPLE_RECORD)


def test_parse_example_record():
    record = parse_record(EXAMPLE_JSON)
    assert record.question_id == "test_0001"
    assert record.rating == 9
    assert record.selected_answer == "answer1"
    assert record.selected_score == 4.7
    assert record.unselected_score == 3.2
    assert record.generation_answer == record.generation_answer1
    assert record.extras == {}


def test_parse_minimal_input_stage():
    record = parse_record('{"question_id":"q1","image":"a.jpg","question":"?"}')
    assert record.question_id == "q1"
    for name in (
        "answer", "image_caption", "rating", "reasoning", "suggestions",
        "evaluated", "optimized", "generation_answer1", "generation_answer2",
        "generation_answer", "selected_answer", "selected_score",
        "unselected_score", "evaluation_reason",
    ):
        assert getattr(record, name) is None


def test_score_ordering_violation():
    bad = dict(EXAMPLE_RECORD, selected_score=3.0, unselected_score=4.0)
    with pytest.raises(RecordValidationError) as err:
        parse_record(json.dumps(bad))
    assert "selected_score" in str(err.value)
    assert "unselected_score" in str(err.value)


def test_generation_answer_must_match_named_candidate():
    bad = dict(EXAMPLE_RECORD, generation_answer="something else")
    with pytest.raises(RecordValidationError) as err:
        parse_record(json.dumps(bad))
    assert "answer1" in str(err.value)


def test_selected_answer2_binds_other_candidate():
    good = dict(
        EXAMPLE_RECORD,
        selected_answer="answer2",
        generation_answer=EXAMPLE_RECORD["generation_answer2"],
        selected_score=3.2,
        unselected_score=3.2,
    )
    record = parse_record(json.dumps(good))
    assert record.generation_answer == record.generation_answer2


def test_malformed_json_reports_byte_offset():
    text = '{"question_id": "q1", "image": }'
    with pytest.raises(RecordParseError) as err:
        parse_record(text)
    assert err.value.byte_offset is not None
    assert "byte" in str(err.value)


def test_non_object_json_rejected():
    with pytest.raises(RecordParseError):
        parse_record("[1, 2, 3]")


def test_stage2_requires_stage1():
    with pytest.raises(RecordValidationError) as err:
        parse_record(
            '{"question_id":"q","image":"i","question":"?","generation_answer1":"a"}'
        )
    assert "stage-2" in str(err.value)


def test_stage3_requires_stage2():
    with pytest.raises(RecordValidationError) as err:
        parse_record(
            '{"question_id":"q","image":"i","question":"?",'
            '"image_caption":"c","evaluation_reason":"r"}'
        )
    assert "stage-3" in str(err.value)


def test_empty_question_id_rejected():
    with pytest.raises(RecordValidationError):
        parse_record('{"question_id":"","image":"i","question":"?"}')


def test_rating_range_enforced():
    with pytest.raises(RecordValidationError):
        parse_record('{"question_id":"q","image":"i","question":"?","rating":11}')


def test_round_trip_example_semantically_equal():
    record = parse_record(EXAMPLE_JSON)
    again = parse_record(serialize_record(record))
    assert again == record
    assert json.loads(serialize_record(record)) == EXAMPLE_RECORD


def test_serialize_minimal_has_exactly_three_keys():
    record = PipelineRecord(question_id="q1", image="a.jpg", question="?")
    data = json.loads(serialize_record(record))
    assert data == {"question_id": "q1", "image": "a.jpg", "question": "?"}


def test_absent_fields_omitted_not_null():
    record = PipelineRecord(question_id="q1", image="a.jpg", question="?")
    assert "null" not in serialize_record(record)


def test_non_ascii_round_trips_byte_identically():
    record = PipelineRecord(
        question_id="q1", image="a.jpg", question="?",
        image_caption="褐色の円形病斑、黄色いハロー付き —  ≈30%",
    )
    once = serialize_record(record)
    twice = serialize_record(parse_record(once))
    assert once.encode("utf-8") == twice.encode("utf-8")


def test_unknown_fields_preserved_verbatim():
    data = dict(EXAMPLE_RECORD, custom_tag={"nested": [1, 2]}, error_category="Judge Bias")
    record = parse_record(json.dumps(data))
    assert record.extras["custom_tag"] == {"nested": [1, 2]}
    assert json.loads(serialize_record(record)) == data


# -- property: round-trip identity over generated valid records -------------

_text = st.text(min_size=1, max_size=40)
_optional_text = st.one_of(st.none(), _text)


@st.composite
def valid_records(draw) -> PipelineRecord:
    stage = draw(st.integers(min_value=0, max_value=3))
    fields: dict = {
        "question_id": draw(st.text(min_size=1, max_size=12)),
        "image": draw(_text),
        "question": draw(_text),
        "answer": draw(_optional_text),
    }
    if stage >= 1:
        fields["image_caption"] = draw(_text)
        fields["rating"] = draw(st.integers(min_value=1, max_value=10))
        fields["reasoning"] = draw(_optional_text)
        fields["suggestions"] = draw(_optional_text)
        fields["evaluated"] = True
        fields["optimized"] = draw(st.booleans())
    if stage >= 2:
        fields["generation_answer1"] = draw(_text)
        fields["generation_answer2"] = draw(_text)
    if stage >= 3:
        low = draw(st.floats(min_value=0, max_value=5, allow_nan=False))
        high = draw(st.floats(min_value=0, max_value=5, allow_nan=False))
        low, high = min(low, high), max(low, high)
        chosen = draw(st.sampled_from(["answer1", "answer2"]))
        fields["selected_answer"] = chosen
        fields["generation_answer"] = fields[f"generation_{chosen}"]
        fields["selected_score"] = high
        fields["unselected_score"] = low
        fields["evaluation_reason"] = draw(_text)
    return PipelineRecord(**fields)


@given(valid_records())
def test_round_trip_identity_property(record: PipelineRecord):
    assert parse_record(serialize_record(record)) == record


def test_load_records_rejects_duplicate_ids(tmp_path):
    path = tmp_path / "data.jsonl"
    row = '{"question_id":"q1","image":"a.jpg","question":"?"}'
    path.write_text(row + "\n" + row + "\n", encoding="utf-8")
    with pytest.raises(RecordValidationError) as err:
        load_records(path)
    assert "duplicate" in str(err.value)


def test_write_then_load_records(tmp_path):
    records = [
        PipelineRecord(question_id=f"q{i}", image="a.jpg", question="?") for i in range(3)
    ]
    path = tmp_path / "out.jsonl"
    write_records(records, path)
    assert load_records(path) == records
