"""Stage 2: two candidate answers from complementary diagnostic viewpoints."""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass

from .errors import CandidateGenerationError, ConfigError, ReplyParseError
from .gateway import ChatRequest, Gateway, ModelProfile, Turn
from .jsonx import extract_object
from .prompts import ExemplarSet, PromptLibrary, RenderedPrompt
from .records import TaskKind

logger = logging.getLogger(__name__)

REFORMAT_NUDGE = (
    "Your previous reply could not be parsed. Emit only the JSON object "
    '{"answer1": "...", "answer2": "..."} with both answers filled in.'
)


@dataclass(frozen=True)
class Viewpoint:
    id: str  # disease_focus | crop_focus | treatment_focus | mechanism_focus
    task: TaskKind


# Canonical viewpoint pairing per task. MCQ questions run the recognition
# pairing unchanged, matching how the pipeline transfers across formats.
_PAIRS: dict[TaskKind, tuple[str, str]] = {
    TaskKind.RECOGNITION: ("disease_focus", "crop_focus"),
    TaskKind.KNOWLEDGE: ("treatment_focus", "mechanism_focus"),
    TaskKind.MCQ: ("disease_focus", "crop_focus"),
}


def viewpoint_pair(task: TaskKind) -> tuple[Viewpoint, Viewpoint]:
    """Total over TaskKind: the two viewpoints answers are generated from."""
    first, second = _PAIRS[task]
    return Viewpoint(first, task), Viewpoint(second, task)


@dataclass(frozen=True)
class CandidatePair:
    answer1: str
    answer2: str
    viewpoint1: Viewpoint
    viewpoint2: Viewpoint
    prompt_fingerprint: str

    def __post_init__(self) -> None:
        if not self.answer1.strip() or not self.answer2.strip():
            raise CandidateGenerationError("candidate answers must be non-empty")
        if self.viewpoint1.id == self.viewpoint2.id:
            raise CandidateGenerationError("candidate viewpoints must be distinct")
        expected = _PAIRS[self.viewpoint1.task]
        if (self.viewpoint1.id, self.viewpoint2.id) != expected:
            raise CandidateGenerationError(
                f"viewpoints {(self.viewpoint1.id, self.viewpoint2.id)} are not "
                f"the canonical pair {expected} for {self.viewpoint1.task.value}"
            )

    def text_of(self, name: str) -> str:
        if name == "answer1":
            return self.answer1
        if name == "answer2":
            return self.answer2
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "answer1": self.answer1,
            "answer2": self.answer2,
            "viewpoint1": self.viewpoint1.id,
            "viewpoint2": self.viewpoint2.id,
            "prompt_fingerprint": self.prompt_fingerprint,
        }


_SECTION_RE = re.compile(
    r"answer\s*([12])\s*[:.\)]\s*(.*?)(?=(?:\n\s*answer\s*[12]\s*[:.\)])|\Z)",
    re.IGNORECASE | re.DOTALL,
)


def parse_candidates(reply: str) -> tuple[str, str]:
    """Extract (answer1, answer2) from a JSON reply or labeled sections."""
    try:
        obj = extract_object(reply, "answer1")
        a1, a2 = obj.get("answer1"), obj.get("answer2")
        if isinstance(a1, str) and isinstance(a2, str):
            return a1, a2
    except ReplyParseError:
        pass
    sections = {m.group(1): m.group(2).strip() for m in _SECTION_RE.finditer(reply)}
    if "1" in sections and "2" in sections:
        return sections["1"], sections["2"]
    raise ReplyParseError(f"could not extract two answers from reply: {reply[:120]!r}")


# Light lexical check for the rule that recognition answers carry BOTH a
# plant identification and a disease/condition statement; violations are
# logged, never fatal.
_PLANT_MARKERS = ("plant", "crop", "host", "leaf", "tree", "variety", "species")
_CONDITION_MARKERS = (
    "disease", "pest", "healthy", "infection", "infestation", "blight",
    "rust", "mildew", "mold", "spot", "virus", "lesion", "condition",
)


def _mentions(text: str, markers: tuple[str, ...]) -> bool:
    lowered = text.lower()
    return any(marker in lowered for marker in markers)


class VqaEngine:
    def __init__(
        self,
        gateway: Gateway,
        library: PromptLibrary,
        profile: ModelProfile,
        shots: int = 3,
        dual_call: bool = False,
    ):
        if not 0 <= shots <= 5:
            raise ConfigError(f"shots must be in 0..5, got {shots}")
        self.gateway = gateway
        self.library = library
        self.profile = profile
        self.shots = shots
        self.dual_call = dual_call

    def _complete(self, prompt: RenderedPrompt, tag: str) -> str:
        return self.gateway.complete(
            ChatRequest(prompt.system, prompt.turns, self.profile, trace_tag=tag)
        ).text

    def generate_candidates(
        self,
        image: str,
        caption: str,
        question: str,
        task: TaskKind,
        exemplars: ExemplarSet,
        trace_tag: str = "vqa",
    ) -> CandidatePair:
        """Produce both viewpoint answers for one question.

        Single-call mode (default) parses both answers from one structured
        reply; two-call mode issues one request per viewpoint.
        """
        v1, v2 = viewpoint_pair(task)
        chosen = exemplars.select(self.shots)
        if self.dual_call:
            pair_texts = []
            fingerprints = []
            for viewpoint in (v1, v2):
                prompt = self.library.render_vqa_prompt(
                    task, caption, question, chosen, image=image, viewpoint=viewpoint.id
                )
                fingerprints.append(
                    ChatRequest(prompt.system, prompt.turns, self.profile).fingerprint()
                )
                reply = self._complete(prompt, f"{trace_tag}_{viewpoint.id}")
                pair_texts.append(self._parse_single(prompt, reply, f"{trace_tag}_{viewpoint.id}"))
            answer1, answer2 = pair_texts
            fingerprint = "+".join(fingerprints)
        else:
            prompt = self.library.render_vqa_prompt(
                task, caption, question, chosen, image=image
            )
            fingerprint = ChatRequest(prompt.system, prompt.turns, self.profile).fingerprint()
            reply = self._complete(prompt, trace_tag)
            answers: tuple[str, str] | None = None
            try:
                answers = parse_candidates(reply)
            except ReplyParseError:
                pass
            if answers is None or not answers[0].strip() or not answers[1].strip():
                # One reformat nudge covers both unparseable and empty replies.
                nudged = RenderedPrompt(
                    prompt.system,
                    prompt.turns + (Turn.assistant(reply), Turn.user(REFORMAT_NUDGE)),
                )
                reply = self._complete(nudged, trace_tag)
                answers = parse_candidates(reply)
                if not answers[0].strip() or not answers[1].strip():
                    raise CandidateGenerationError(
                        "model returned an empty candidate answer after the retry"
                    )
            answer1, answer2 = answers

        if task in (TaskKind.RECOGNITION, TaskKind.MCQ):
            for label, text in (("answer1", answer1), ("answer2", answer2)):
                if not (_mentions(text, _PLANT_MARKERS) and _mentions(text, _CONDITION_MARKERS)):
                    logger.warning(
                        "%s does not clearly state both plant and disease/"
                        "condition (rule violation, question %s)",
                        label,
                        trace_tag,
                    )
        return CandidatePair(answer1, answer2, v1, v2, fingerprint)

    def _parse_single(self, prompt: RenderedPrompt, reply: str, tag: str) -> str:
        try:
            obj = extract_object(reply, "answer")
            answer = obj.get("answer")
            if isinstance(answer, str) and answer.strip():
                return answer
        except ReplyParseError:
            pass
        nudged = RenderedPrompt(
            prompt.system,
            prompt.turns
            + (
                Turn.assistant(reply),
                Turn.user(
                    "Your previous reply could not be parsed. Emit only the "
                    'JSON object {"answer": "..."}.'
                ),
            ),
        )
        reply = self._complete(nudged, tag)
        obj = extract_object(reply, "answer")
        answer = obj.get("answer")
        if not isinstance(answer, str) or not answer.strip():
            raise CandidateGenerationError("model returned an empty candidate answer")
        return answer
