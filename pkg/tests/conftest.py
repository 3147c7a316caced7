"""Shared fixtures: no-sleep gateways and canned mock replies."""

from __future__ import annotations

import json

import pytest

from agrivqa.gateway import BackoffPolicy, CallLog, Gateway, MockEntry, MockBackend


def fast_gateway(script, log: CallLog | None = None) -> Gateway:
    """Gateway over a scripted mock with backoff sleeping disabled."""
    entries = []
    for item in script:
        if isinstance(item, MockEntry):
            entries.append(item)
        else:
            match, reply = item
            if reply in ("!transient", "!fatal"):
                entries.append(MockEntry(match, fail=reply[1:]))
            else:
                entries.append(MockEntry(match, reply=reply))
    return Gateway(
        MockBackend(entries),
        log=log,
        backoff=BackoffPolicy(initial=0.0, sleep=lambda _s: None),
    )


def caption_reply(text: str) -> str:
    return json.dumps({"image_caption": text})


def score_reply(
    value: float | None = None,
    *,
    scores: dict[str, float] | None = None,
    reasoning: str = "well formed",
    suggestions: str = "none",
) -> str:
    if scores is None:
        assert value is not None
        scores = {
            name: value for name in ("Accuracy", "Completeness", "Detail", "Relevance", "Clarity")
        }
    rating = sum(scores.values()) / len(scores)
    return json.dumps(
        {"scores": scores, "rating": rating, "reasoning": reasoning, "suggestions": suggestions}
    )


def vqa_reply(answer1: str, answer2: str) -> str:
    return json.dumps({"answer1": answer1, "answer2": answer2})


def judge_reply(
    choice: int,
    reason: str,
    scores1: dict[str, float],
    scores2: dict[str, float],
    include_totals: bool = True,
) -> str:
    def card(scores: dict[str, float]) -> dict:
        out = dict(scores)
        if include_totals:
            out["total"] = round(sum(scores.values()), 6)
        return out

    return json.dumps(
        {"choice": choice, "reason": reason,
         "scores": {"answer1": card(scores1), "answer2": card(scores2)}}
    )


DIAG = ("plant_accuracy", "disease_accuracy", "symptom_accuracy", "format_adherence", "completeness")


def diag_scores(*values: float) -> dict[str, float]:
    assert len(values) == 5
    return dict(zip(DIAG, values))


def query_script(
    image: str,
    question: str,
    captions: list[str],
    ratings: list[float],
    answer1: str,
    answer2: str,
    judge: str | None = None,
    scores1: dict[str, float] | None = None,
    scores2: dict[str, float] | None = None,
) -> list[tuple[str, str]]:
    """Script one full pipeline query, routed by query-unique substrings.

    Rules key on the image ref, the caption text, and the question so that
    scripts for many queries can interleave safely under concurrency.
    """
    assert len(captions) == len(ratings)
    script: list[tuple[str, str]] = []
    for i, (caption, rating) in enumerate(zip(captions, ratings)):
        # Generation and refinement both carry the image; stage order within
        # a query guarantees the right entry is consumed.
        script.append((f"[image:{image}]", caption_reply(caption)))
        script.append((f"Description to evaluate:\n{caption}", score_reply(rating)))
    if judge is None:
        judge = judge_reply(
            1,
            "Answer 1 provides specific disease identification.",
            scores1 or diag_scores(1.0, 1.0, 0.9, 1.0, 0.8),   # 4.7
            scores2 or diag_scores(0.5, 0.5, 0.6, 0.8, 0.8),   # 3.2
        )
    script.append((f"Question: {question}", vqa_reply(answer1, answer2)))
    script.append((f"Question: {question}", judge))
    return script


@pytest.fixture
def call_log() -> CallLog:
    return CallLog()
