"""Per-query pipeline records and their JSON/JSONL serialization.

A record accumulates fields as it moves through the three stages:

    input   -> question_id, image, question, answer?
    stage 1 -> image_caption, rating, reasoning, suggestions, evaluated, optimized
    stage 2 -> generation_answer1, generation_answer2
    stage 3 -> generation_answer, selected_answer, selected_score,
               unselected_score, evaluation_reason

Absent fields are omitted on output (never emitted as null), unknown fields
are preserved verbatim, and ``parse_record(serialize_record(r)) == r``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Any, Iterable, Iterator

from .errors import RecordParseError, RecordValidationError


class TaskKind(str, Enum):
    """Question category; selects the viewpoint pair, rubric, and metric."""

    RECOGNITION = "recognition"
    KNOWLEDGE = "knowledge"
    MCQ = "mcq"


# Canonical field order for serialization, mirroring stage order.
_FIELD_ORDER = (
    "question_id",
    "image",
    "question",
    "answer",
    "image_caption",
    "rating",
    "reasoning",
    "suggestions",
    "evaluated",
    "optimized",
    "generation_answer1",
    "generation_answer2",
    "generation_answer",
    "selected_answer",
    "selected_score",
    "unselected_score",
    "evaluation_reason",
)

_STAGE1_FIELDS = ("image_caption", "rating", "reasoning", "suggestions", "evaluated", "optimized")
_STAGE2_FIELDS = ("generation_answer1", "generation_answer2")
_STAGE3_FIELDS = (
    "generation_answer",
    "selected_answer",
    "selected_score",
    "unselected_score",
    "evaluation_reason",
)


@dataclass(frozen=True)
class PipelineRecord:
    """Immutable per-query record; safe to share between workers."""

    question_id: str
    image: str
    question: str
    answer: str | None = None
    image_caption: str | None = None
    rating: int | None = None
    reasoning: str | None = None
    suggestions: str | None = None
    evaluated: bool | None = None
    optimized: bool | None = None
    generation_answer1: str | None = None
    generation_answer2: str | None = None
    generation_answer: str | None = None
    selected_answer: str | None = None
    selected_score: float | None = None
    unselected_score: float | None = None
    evaluation_reason: str | None = None
    extras: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        """Check all schema invariants; raise RecordValidationError on violation."""
        if not self.question_id:
            raise RecordValidationError("question_id must be non-empty", ("question_id",))
        if self.rating is not None and not 1 <= self.rating <= 10:
            raise RecordValidationError(
                f"rating must be in 1..10, got {self.rating}", ("rating",)
            )
        for name in ("selected_score", "unselected_score"):
            score = getattr(self, name)
            if score is not None and not 0.0 <= score <= 5.0:
                raise RecordValidationError(f"{name} must be in 0..5, got {score}", (name,))
        if self.selected_score is not None and self.unselected_score is not None:
            if self.selected_score < self.unselected_score:
                raise RecordValidationError(
                    f"selected_score ({self.selected_score}) < unselected_score "
                    f"({self.unselected_score})",
                    ("selected_score", "unselected_score"),
                )
        if self.selected_answer is not None:
            if self.selected_answer not in ("answer1", "answer2"):
                raise RecordValidationError(
                    f"selected_answer must be 'answer1' or 'answer2', got "
                    f"{self.selected_answer!r}",
                    ("selected_answer",),
                )
            candidate = (
                self.generation_answer1
                if self.selected_answer == "answer1"
                else self.generation_answer2
            )
            if self.generation_answer != candidate:
                raise RecordValidationError(
                    f"generation_answer must equal the text of {self.selected_answer}",
                    ("generation_answer", "generation_" + self.selected_answer),
                )
        self._check_stage_monotonicity()

    def _check_stage_monotonicity(self) -> None:
        # Presence of any later-stage field requires at least one field of
        # every earlier stage (the published examples omit some stage-1
        # fields, so "all present" would be too strict).
        stage1 = any(getattr(self, f) is not None for f in _STAGE1_FIELDS)
        stage2 = any(getattr(self, f) is not None for f in _STAGE2_FIELDS)
        stage3 = any(getattr(self, f) is not None for f in _STAGE3_FIELDS)
        if stage2 and not stage1:
            raise RecordValidationError(
                "stage-2 fields present without any stage-1 field", _STAGE2_FIELDS
            )
        if stage3 and not stage2:
            raise RecordValidationError(
                "stage-3 fields present without any stage-2 field", _STAGE3_FIELDS
            )

    def evolve(self, **changes: Any) -> "PipelineRecord":
        """Return a copy with the given fields updated (re-validated)."""
        return replace(self, **changes)

    def with_extra(self, key: str, value: Any) -> "PipelineRecord":
        extras = dict(self.extras)
        extras[key] = value
        return replace(self, extras=extras)

    def to_dict(self) -> dict[str, Any]:
        """Plain dict in canonical field order; absent optionals omitted."""
        out: dict[str, Any] = {}
        for name in _FIELD_ORDER:
            value = getattr(self, name)
            if value is not None:
                out[name] = value
        out.update(self.extras)
        return out


def parse_record(json_text: str) -> PipelineRecord:
    """Parse one JSON object into a PipelineRecord.

    Unrecognized fields are preserved in ``extras`` so records round-trip.
    Raises RecordParseError for malformed JSON (with byte offset) and
    RecordValidationError for invariant violations.
    """
    try:
        data = json.loads(json_text)
    except json.JSONDecodeError as exc:
        byte_offset = len(json_text[: exc.pos].encode("utf-8"))
        raise RecordParseError(
            f"malformed JSON at byte {byte_offset}: {exc.msg}", byte_offset
        ) from exc
    if not isinstance(data, dict):
        raise RecordParseError(f"expected a JSON object, got {type(data).__name__}")
    return record_from_dict(data)


def record_from_dict(data: dict[str, Any]) -> PipelineRecord:
    """Bind recognized fields, stash the rest in extras, and validate."""
    known: dict[str, Any] = {}
    extras: dict[str, Any] = {}
    for key, value in data.items():
        if key in _FIELD_ORDER:
            known[key] = value
        else:
            extras[key] = value

    for required in ("question_id", "image", "question"):
        if required not in known:
            raise RecordValidationError(f"missing required field {required!r}", (required,))
        if not isinstance(known[required], str):
            raise RecordValidationError(f"{required} must be a string", (required,))

    rating = known.get("rating")
    if rating is not None:
        if isinstance(rating, bool) or not isinstance(rating, (int, float)):
            raise RecordValidationError("rating must be a number", ("rating",))
        if isinstance(rating, float):
            if not rating.is_integer():
                raise RecordValidationError(
                    f"rating must be an integer, got {rating}", ("rating",)
                )
            rating = int(rating)
        known["rating"] = rating

    for name in ("selected_score", "unselected_score"):
        score = known.get(name)
        if score is not None:
            if isinstance(score, bool) or not isinstance(score, (int, float)):
                raise RecordValidationError(f"{name} must be a number", (name,))
            known[name] = float(score)

    for name in ("evaluated", "optimized"):
        flag = known.get(name)
        if flag is not None and not isinstance(flag, bool):
            raise RecordValidationError(f"{name} must be a boolean", (name,))

    text_fields = (
        "answer",
        "image_caption",
        "reasoning",
        "suggestions",
        "generation_answer1",
        "generation_answer2",
        "generation_answer",
        "selected_answer",
        "evaluation_reason",
    )
    for name in text_fields:
        value = known.get(name)
        if value is not None and not isinstance(value, str):
            raise RecordValidationError(f"{name} must be a string", (name,))

    return PipelineRecord(extras=extras, **known)


def serialize_record(record: PipelineRecord) -> str:
    """Serialize to a single-line JSON object (UTF-8, non-ASCII preserved)."""
    return json.dumps(record.to_dict(), ensure_ascii=False)


def load_records(path: str | Path) -> list[PipelineRecord]:
    """Read a JSONL dataset; question_ids must be unique within the file."""
    records: list[PipelineRecord] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = parse_record(line)
            except (RecordParseError, RecordValidationError) as exc:
                raise type(exc)(f"{path}:{lineno}: {exc}") from exc
            if record.question_id in seen:
                raise RecordValidationError(
                    f"{path}:{lineno}: duplicate question_id {record.question_id!r}",
                    ("question_id",),
                )
            seen.add(record.question_id)
            records.append(record)
    return records


def write_records(records: Iterable[PipelineRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(serialize_record(record) + "\n")


def iter_jsonl(path: str | Path) -> Iterator[dict[str, Any]]:
    """Yield raw JSON objects from a JSONL file (non-record payloads)."""
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                yield json.loads(line)
