"""Stage 3: rubric scoring of both candidates, winner selection, tie-break.

The judge model proposes per-criterion scores and a choice; the totals and
the selection are always recomputed locally so the rule is deterministic
even when the model mis-adds or contradicts its own scores.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

from .errors import JudgeError, ReplyParseError
from .gateway import ChatRequest, Gateway, ModelProfile, Turn
from .jsonx import extract_object
from .prompts import (
    DIAGNOSIS_CRITERIA,
    KNOWLEDGE_CRITERIA,
    PromptLibrary,
    RenderedPrompt,
)
from .records import TaskKind
from .vqa import CandidatePair

logger = logging.getLogger(__name__)

DEFAULT_TIEBREAK_MARGIN = 0.3

# Sub-scores that decide a near-tie: identification accuracy for diagnosis,
# and the correctness analogue for knowledge answers.
_TIEBREAK_KEYS: dict[TaskKind, tuple[str, str]] = {
    TaskKind.RECOGNITION: ("plant_accuracy", "disease_accuracy"),
    TaskKind.MCQ: ("plant_accuracy", "disease_accuracy"),
    TaskKind.KNOWLEDGE: ("accuracy", "scientific_validity"),
}

REFORMAT_NUDGE = (
    "Your previous reply could not be parsed. Emit only the JSON object in "
    "the required output format, including per-criterion scores for both "
    "answers and a non-empty reason."
)


def rubric_for(task: TaskKind) -> tuple[str, ...]:
    if task in (TaskKind.RECOGNITION, TaskKind.MCQ):
        return DIAGNOSIS_CRITERIA
    return KNOWLEDGE_CRITERIA


@dataclass(frozen=True)
class Scorecard:
    """Ordered per-criterion scores in [0,1]; total is their sum on 0-5."""

    criteria: tuple[tuple[str, float], ...]

    def __post_init__(self) -> None:
        for name, value in self.criteria:
            if not 0.0 <= value <= 1.0:
                raise JudgeError(f"criterion {name!r} score {value} outside 0..1")

    @staticmethod
    def from_mapping(values: dict[str, float], order: tuple[str, ...]) -> "Scorecard":
        return Scorecard(tuple((name, float(values[name])) for name in order))

    @property
    def total(self) -> float:
        # Rounded so sums of decimal rubric scores stay stable (0.9 + 0.8
        # must compare and serialize as 1.7, not 1.7000000000000002).
        return round(sum(value for _, value in self.criteria), 6)

    def value(self, name: str) -> float:
        for key, value in self.criteria:
            if key == name:
                return value
        raise KeyError(name)

    def to_dict(self) -> dict:
        out = {name: value for name, value in self.criteria}
        out["total"] = self.total
        return out


def aggregate_score(card: Scorecard) -> float:
    """Mean criterion score in [0,1]; argmax over it equals argmax over totals."""
    return card.total / len(card.criteria)


def apply_tiebreak(
    card1: Scorecard,
    card2: Scorecard,
    task: TaskKind,
    margin: float = DEFAULT_TIEBREAK_MARGIN,
) -> tuple[str, bool]:
    """Select answer1/answer2 from the two scorecards.

    Totals further apart than the margin decide directly; otherwise the
    identification sub-scores decide, and an exact sub-score tie defaults
    to answer1.
    """
    t1, t2 = card1.total, card2.total
    if abs(t1 - t2) > margin:
        return ("answer1" if t1 > t2 else "answer2"), False
    key_a, key_b = _TIEBREAK_KEYS[task]
    s1 = round(card1.value(key_a) + card1.value(key_b), 6)
    s2 = round(card2.value(key_a) + card2.value(key_b), 6)
    if s2 > s1:
        return "answer2", True
    return "answer1", True


@dataclass(frozen=True)
class Judgment:
    choice: str  # "answer1" | "answer2", in original (unswapped) identity
    selected_text: str
    selected_score: float
    unselected_score: float
    rationale: str
    scorecards: tuple[Scorecard, Scorecard]  # (answer1, answer2), unswapped
    order_used: str  # "as_given" | "swapped"
    tiebreak_applied: bool

    @property
    def selected_mean(self) -> float:
        """Selected total rescaled to [0,1] (the per-criterion mean)."""
        return self.selected_score / len(self.scorecards[0].criteria)

    @property
    def unselected_mean(self) -> float:
        return self.unselected_score / len(self.scorecards[0].criteria)

    def to_dict(self) -> dict:
        return {
            "choice": self.choice,
            "selected_text": self.selected_text,
            "selected_score": self.selected_score,
            "unselected_score": self.unselected_score,
            "selected_mean": self.selected_mean,
            "unselected_mean": self.unselected_mean,
            "rationale": self.rationale,
            "scorecards": {
                "answer1": self.scorecards[0].to_dict(),
                "answer2": self.scorecards[1].to_dict(),
            },
            "order_used": self.order_used,
            "tiebreak_applied": self.tiebreak_applied,
        }


def _parse_card(raw: object, order: tuple[str, ...], label: str) -> Scorecard:
    if not isinstance(raw, dict):
        raise ReplyParseError(f"judge reply carries no scores for {label}")
    values: dict[str, float] = {}
    for name in order:
        value = raw.get(name)
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ReplyParseError(f"judge reply missing criterion {name!r} for {label}")
        clamped = min(1.0, max(0.0, float(value)))
        if clamped != float(value):
            logger.warning(
                "judge criterion %s for %s out of range (%s); clamped", name, label, value
            )
        values[name] = clamped
    return Scorecard.from_mapping(values, order)


class JudgeEngine:
    def __init__(
        self,
        gateway: Gateway,
        library: PromptLibrary,
        profile: ModelProfile,
        margin: float = DEFAULT_TIEBREAK_MARGIN,
        swap: bool = False,
    ):
        self.gateway = gateway
        self.library = library
        self.profile = profile
        self.margin = margin
        self.swap = swap

    def _complete(self, prompt: RenderedPrompt, tag: str) -> str:
        return self.gateway.complete(
            ChatRequest(prompt.system, prompt.turns, self.profile, trace_tag=tag)
        ).text

    def judge(
        self,
        pair: CandidatePair,
        reference: str | None,
        question: str,
        caption: str,
        task: TaskKind,
        order: str | None = None,
        trace_tag: str = "judge",
    ) -> Judgment:
        """Score both candidates and return the deterministic selection.

        The image is never sent: judging is text-only. With order="swapped"
        the prompt presents answer2 first and the parsed positions are
        mapped back, so the returned choice always names the original
        candidate.
        """
        order = order if order is not None else ("swapped" if self.swap else "as_given")
        rubric = rubric_for(task)
        prompt = self.library.render_judge_prompt(
            task, question, caption, reference, pair.answer1, pair.answer2, order=order
        )
        reply = self._complete(prompt, trace_tag)
        try:
            parsed = self._parse_reply(reply, rubric)
        except ReplyParseError:
            nudged = RenderedPrompt(
                prompt.system,
                prompt.turns + (Turn.assistant(reply), Turn.user(REFORMAT_NUDGE)),
            )
            reply = self._complete(nudged, trace_tag)
            try:
                parsed = self._parse_reply(reply, rubric)
            except ReplyParseError as exc:
                raise JudgeError(f"judge reply unusable after retry: {exc}") from exc
        position1_card, position2_card, model_choice, reason = parsed

        if order == "swapped":
            card1, card2 = position2_card, position1_card
            if model_choice in (1, 2):
                model_choice = 3 - model_choice
        else:
            card1, card2 = position1_card, position2_card

        choice, tiebreak_applied = apply_tiebreak(card1, card2, task, self.margin)
        if model_choice in (1, 2) and f"answer{model_choice}" != choice:
            logger.warning(
                "judge stated choice answer%d but recomputed totals select %s "
                "(totals %.3f vs %.3f)",
                model_choice,
                choice,
                card1.total,
                card2.total,
            )
        selected_card, unselected_card = (
            (card1, card2) if choice == "answer1" else (card2, card1)
        )
        return Judgment(
            choice=choice,
            selected_text=pair.text_of(choice),
            selected_score=selected_card.total,
            unselected_score=unselected_card.total,
            rationale=reason,
            scorecards=(card1, card2),
            order_used=order,
            tiebreak_applied=tiebreak_applied,
        )

    @staticmethod
    def _parse_reply(
        reply: str, rubric: tuple[str, ...]
    ) -> tuple[Scorecard, Scorecard, int | None, str]:
        obj = extract_object(reply, "scores")
        scores = obj.get("scores")
        if not isinstance(scores, dict):
            raise ReplyParseError("judge reply carries no scores object")
        card1 = _parse_card(scores.get("answer1"), rubric, "answer1")
        card2 = _parse_card(scores.get("answer2"), rubric, "answer2")
        reason = obj.get("reason")
        if not isinstance(reason, str) or not reason.strip():
            raise ReplyParseError("judge reply carries no rationale text")
        raw_choice = obj.get("choice")
        model_choice: int | None = None
        if isinstance(raw_choice, (int, float)) and int(raw_choice) in (1, 2):
            model_choice = int(raw_choice)
        elif isinstance(raw_choice, str) and raw_choice.strip() in ("1", "2"):
            model_choice = int(raw_choice.strip())
        return card1, card2, model_choice, reason.strip()
