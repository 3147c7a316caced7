"""Stage 1: caption generation, multi-dimension scoring, and refinement.

A caption is generated, scored against the five-criterion rubric, and sent
back for targeted rewriting until it clears the quality threshold or the
iteration budget runs out. Captions that name a crop or disease fail the
debiasing gate and are refined once even when their score clears the
threshold.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

from .errors import CaptionScoringError, PipelineError, ReplyParseError
from .gateway import ChatRequest, Gateway, ModelProfile, Turn
from .jsonx import extract_object
from .prompts import (
    DEFAULT_DIMENSION_NAMES,
    BannedTermLexicon,
    DEFAULT_LEXICON,
    ExemplarSet,
    PromptLibrary,
    RenderedPrompt,
    TermHit,
    detect_banned_terms,
)

logger = logging.getLogger(__name__)

REFORMAT_NUDGE = (
    "Your previous reply could not be parsed. Emit only the JSON object in "
    "the required output format, with no surrounding text."
)


def weighted_mean(scores: dict[str, float], weights: dict[str, float]) -> float:
    """Sum(w_i * d_i) / Sum(w_i); invariant under positive weight scaling."""
    total_weight = sum(weights.values())
    if total_weight <= 0:
        raise ValueError("weights must sum to a positive value")
    return sum(weights[name] * scores[name] for name in scores) / total_weight


def round_half_up(value: float) -> int:
    return int(math.floor(value + 0.5))


@dataclass(frozen=True)
class QualityAssessment:
    """Per-dimension caption scores with the locally computed aggregate."""

    dimension_scores: dict[str, float]
    weights: dict[str, float]
    aggregate: float
    reasoning: str
    suggestions: str
    threshold: float
    passed: bool

    @staticmethod
    def from_scores(
        dimension_scores: dict[str, float],
        weights: dict[str, float],
        threshold: float,
        reasoning: str = "",
        suggestions: str = "",
    ) -> "QualityAssessment":
        if set(dimension_scores) != set(weights):
            raise CaptionScoringError(
                f"dimension keys {sorted(dimension_scores)} do not match "
                f"weight keys {sorted(weights)}"
            )
        for name, score in dimension_scores.items():
            if not 1.0 <= score <= 10.0:
                raise CaptionScoringError(f"dimension {name!r} score {score} outside 1..10")
        for name, weight in weights.items():
            if weight < 0:
                raise CaptionScoringError(f"weight {name!r} must be non-negative")
        aggregate = weighted_mean(dimension_scores, weights)
        return QualityAssessment(
            dimension_scores=dict(dimension_scores),
            weights=dict(weights),
            aggregate=aggregate,
            reasoning=reasoning,
            suggestions=suggestions,
            threshold=threshold,
            passed=aggregate >= threshold,
        )

    def to_dict(self) -> dict:
        return {
            "dimension_scores": self.dimension_scores,
            "weights": self.weights,
            "aggregate": self.aggregate,
            "reasoning": self.reasoning,
            "suggestions": self.suggestions,
            "threshold": self.threshold,
            "passed": self.passed,
        }


@dataclass(frozen=True)
class CaptionIteration:
    caption: str
    assessment: QualityAssessment
    critique: str | None = None  # set when this iteration was refined away
    banned_hits: tuple[TermHit, ...] = ()

    def to_dict(self) -> dict:
        return {
            "caption": self.caption,
            "assessment": self.assessment.to_dict(),
            "critique": self.critique,
            "banned_hits": [
                {"term": h.term, "category": h.category, "span": list(h.span)}
                for h in self.banned_hits
            ],
        }


@dataclass(frozen=True)
class CaptionTrace:
    """Full refinement history for one image."""

    iterations: tuple[CaptionIteration, ...]
    accepted_index: int
    converged: bool
    iterations_used: int
    residual_hits: bool = False  # accepted caption still carries lexicon terms

    @property
    def accepted(self) -> CaptionIteration:
        return self.iterations[self.accepted_index]

    def to_dict(self) -> dict:
        return {
            "iterations": [it.to_dict() for it in self.iterations],
            "accepted_index": self.accepted_index,
            "converged": self.converged,
            "iterations_used": self.iterations_used,
            "residual_hits": self.residual_hits,
        }


def build_critique(assessment: QualityAssessment, hits: list[TermHit]) -> str:
    """Targeted feedback for the refinement prompt; lists every lexicon hit."""
    lines = [
        f"Quality score {assessment.aggregate:.2f}/10 against threshold "
        f"{assessment.threshold:.1f}."
    ]
    if assessment.reasoning:
        lines.append(f"Reasoning: {assessment.reasoning}")
    if assessment.suggestions:
        lines.append(f"Suggestions: {assessment.suggestions}")
    if hits:
        named = ", ".join(f"{h.term} ({h.category})" for h in hits)
        lines.append(
            "The description must not identify the plant or disease. Remove "
            f"these terms: {named}."
        )
    return "\n".join(lines)


class CaptionEngine:
    def __init__(
        self,
        gateway: Gateway,
        library: PromptLibrary,
        caption_profile: ModelProfile,
        scorer_profile: ModelProfile,
        threshold: float = 8.0,
        n_max: int = 3,
        weights: dict[str, float] | None = None,
        dimensions: tuple[str, ...] = DEFAULT_DIMENSION_NAMES,
        lexicon: BannedTermLexicon = DEFAULT_LEXICON,
    ):
        if n_max < 1:
            raise ValueError(f"n_max must be >= 1, got {n_max}")
        if not 0 < threshold <= 10:
            raise ValueError(f"threshold must be in (0, 10], got {threshold}")
        self.gateway = gateway
        self.library = library
        self.caption_profile = caption_profile
        self.scorer_profile = scorer_profile
        self.threshold = threshold
        self.n_max = n_max
        self.dimensions = tuple(dimensions)
        self.weights = dict(weights) if weights else {name: 1.0 for name in self.dimensions}
        if set(self.weights) != set(self.dimensions):
            raise ValueError("weights must cover exactly the configured dimensions")
        self.lexicon = lexicon

    # -- calls ------------------------------------------------------------

    def _complete(self, prompt: RenderedPrompt, profile: ModelProfile, tag: str) -> str:
        response = self.gateway.complete(
            ChatRequest(prompt.system, prompt.turns, profile, trace_tag=tag)
        )
        return response.text

    def _complete_json(
        self, prompt: RenderedPrompt, profile: ModelProfile, tag: str, key: str | None
    ) -> dict:
        """One call, plus a single reformat nudge when the reply is not JSON."""
        reply = self._complete(prompt, profile, tag)
        try:
            return extract_object(reply, key)
        except ReplyParseError:
            logger.debug("unparseable reply on %s; sending reformat nudge", tag)
        nudged = RenderedPrompt(
            prompt.system,
            prompt.turns + (Turn.assistant(reply), Turn.user(REFORMAT_NUDGE)),
        )
        reply = self._complete(nudged, profile, tag)
        return extract_object(reply, key)

    # -- operations ---------------------------------------------------------

    def generate_caption(
        self, image: str, exemplars: ExemplarSet, trace_tag: str = "caption_generate"
    ) -> str:
        prompt = self.library.render_caption_prompt(exemplars, image=image)
        obj = self._complete_json(prompt, self.caption_profile, trace_tag, "image_caption")
        caption = obj["image_caption"]
        if not isinstance(caption, str) or not caption.strip():
            raise ReplyParseError("image_caption value is empty or not text")
        return caption

    def refine_caption(
        self, image: str, caption: str, critique: str, trace_tag: str = "caption_refine"
    ) -> str:
        prompt = self.library.render_refinement_prompt(caption, critique, image=image)
        obj = self._complete_json(prompt, self.caption_profile, trace_tag, "image_caption")
        revised = obj["image_caption"]
        if not isinstance(revised, str) or not revised.strip():
            raise ReplyParseError("image_caption value is empty or not text")
        return revised

    def score_caption(self, caption: str, trace_tag: str = "caption_score") -> QualityAssessment:
        """Score a caption on the configured dimensions.

        The aggregate is always recomputed locally from the weighted mean;
        any aggregate the scorer model emits is ignored.
        """
        if not caption:
            raise ValueError("caption must be non-empty")
        prompt = self.library.render_caption_score_prompt(caption)
        obj = self._complete_json(prompt, self.scorer_profile, trace_tag, "scores")
        raw_scores = obj.get("scores")
        if not isinstance(raw_scores, dict):
            raise CaptionScoringError("scorer reply carries no scores object")
        by_lower = {str(k).lower(): v for k, v in raw_scores.items()}
        scores: dict[str, float] = {}
        missing: list[str] = []
        for name in self.dimensions:
            value = by_lower.get(name.lower())
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                missing.append(name)
            else:
                scores[name] = float(value)
        if missing:
            raise CaptionScoringError(
                f"scorer returned {len(scores)} of {len(self.dimensions)} "
                f"dimension scores; missing {missing}"
            )
        return QualityAssessment.from_scores(
            scores,
            self.weights,
            self.threshold,
            reasoning=str(obj.get("reasoning", "")),
            suggestions=str(obj.get("suggestions", "")),
        )

    def refine_loop(
        self, image: str, exemplars: ExemplarSet, tag_prefix: str = ""
    ) -> CaptionTrace:
        """Generate, score, and refine until the gate passes or budget is spent.

        The gate requires both aggregate >= threshold and zero lexicon hits; a
        passing caption with hits is refined once more with the hit terms in
        the critique, and a second consecutive hit is accepted with a warning.
        """
        def tag(stage: str) -> str:
            return f"{tag_prefix}{stage}"

        iterations: list[CaptionIteration] = []
        try:
            return self._refine_loop(image, exemplars, tag, iterations)
        except PipelineError as exc:
            # Attach what the loop produced so far for diagnosis.
            exc.partial_trace = CaptionTrace(  # type: ignore[attr-defined]
                iterations=tuple(iterations),
                accepted_index=max(
                    range(len(iterations)),
                    key=lambda i: iterations[i].assessment.aggregate,
                    default=0,
                ) if iterations else 0,
                converged=False,
                iterations_used=max(0, len(iterations) - 1),
            )
            raise

    def _refine_loop(
        self,
        image: str,
        exemplars: ExemplarSet,
        tag,
        iterations: list[CaptionIteration],
    ) -> CaptionTrace:
        caption = self.generate_caption(image, exemplars, trace_tag=tag("caption_generate"))
        refinements = 0
        debias_retry_used = False
        converged = False
        residual_hits = False

        while True:
            assessment = self.score_caption(caption, trace_tag=tag("caption_score"))
            hits = detect_banned_terms(caption, self.lexicon)
            iterations.append(
                CaptionIteration(caption, assessment, banned_hits=tuple(hits))
            )
            if assessment.passed and not hits:
                converged = True
                break
            if assessment.passed and hits and debias_retry_used:
                logger.warning(
                    "caption still carries lexicon terms after debias refinement: %s",
                    [h.term for h in hits],
                )
                converged = True
                residual_hits = True
                break
            if refinements >= self.n_max:
                if assessment.passed and hits:
                    logger.warning(
                        "iteration budget exhausted; accepting passing caption "
                        "with lexicon terms: %s",
                        [h.term for h in hits],
                    )
                    converged = True
                    residual_hits = True
                break
            critique = build_critique(assessment, hits)
            iterations[-1] = CaptionIteration(
                caption, assessment, critique=critique, banned_hits=tuple(hits)
            )
            if assessment.passed and hits:
                debias_retry_used = True
            caption = self.refine_caption(
                image, caption, critique, trace_tag=tag("caption_refine")
            )
            refinements += 1

        if converged:
            accepted_index = len(iterations) - 1
        else:
            best = max(range(len(iterations)), key=lambda i: iterations[i].assessment.aggregate)
            accepted_index = best
        return CaptionTrace(
            iterations=tuple(iterations),
            accepted_index=accepted_index,
            converged=converged,
            iterations_used=refinements,
            residual_hits=residual_hits,
        )
