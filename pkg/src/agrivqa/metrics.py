"""Metrics and run reporting: keyword accuracy, MCQ exact match, judge-scored
QA, Cohen's kappa, the random-draw uplift baseline, and call accounting."""

from __future__ import annotations

import logging
import math
import random
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Hashable, Iterable, Sequence

from .errors import ConfigError, QaScoringError, RecordValidationError
from .gateway import ChatRequest, Gateway, ModelProfile
from .prompts import PromptLibrary
from .records import PipelineRecord, TaskKind, iter_jsonl

logger = logging.getLogger(__name__)

MCQ_OPTIONS = ("A", "B", "C", "D")


@dataclass(frozen=True)
class GoldLabel:
    question_id: str
    crop_keywords: tuple[str, ...] | None = None
    disease_keywords: tuple[str, ...] | None = None
    mcq_option: str | None = None
    reference_answer: str | None = None

    def __post_init__(self) -> None:
        if not self.question_id:
            raise RecordValidationError("gold label needs a question_id", ("question_id",))
        has_keywords = self.crop_keywords is not None or self.disease_keywords is not None
        if self.mcq_option is not None:
            if self.mcq_option not in MCQ_OPTIONS:
                raise RecordValidationError(
                    f"mcq_option must be one of {MCQ_OPTIONS}, got {self.mcq_option!r}",
                    ("mcq_option",),
                )
            if has_keywords:
                raise RecordValidationError(
                    "mcq_option is exclusive with keyword fields",
                    ("mcq_option", "crop_keywords", "disease_keywords"),
                )
        if not has_keywords and self.mcq_option is None and self.reference_answer is None:
            raise RecordValidationError(
                "gold label carries no label field",
                ("crop_keywords", "disease_keywords", "mcq_option", "reference_answer"),
            )


def load_gold_labels(path: str | Path) -> dict[str, GoldLabel]:
    labels: dict[str, GoldLabel] = {}
    for row in iter_jsonl(path):
        label = GoldLabel(
            question_id=row["question_id"],
            crop_keywords=tuple(row["crop_keywords"]) if "crop_keywords" in row else None,
            disease_keywords=tuple(row["disease_keywords"]) if "disease_keywords" in row else None,
            mcq_option=row.get("mcq_option"),
            reference_answer=row.get("reference_answer") or row.get("answer"),
        )
        labels[label.question_id] = label
    return labels


# ---------------------------------------------------------------------------
# Item-level metrics
# ---------------------------------------------------------------------------


def keyword_match(response: str, keywords: Sequence[str]) -> bool:
    """True iff the response contains any keyword, case-insensitive.

    Multi-word keywords match as whole phrases ("leaf rust" must appear
    contiguously).
    """
    if not keywords:
        raise ValueError("keywords must be non-empty")
    lowered = response.lower()
    return any(kw.lower() in lowered for kw in keywords)


_MCQ_CUE_RE = re.compile(
    r"(?:answer|option|choice)\s*(?:is|:)?\s*[\(\[]?\s*([A-D])(?![A-Za-z])",
    re.IGNORECASE,
)
_MCQ_STANDALONE_RE = re.compile(r"(?<![A-Za-z])([A-D])(?![A-Za-z])")


def extract_mcq_option(response: str) -> str | None:
    """The predicted option letter, or None when the response is ambiguous.

    An "Answer:/Option:/Choice:" cue wins outright; otherwise all standalone
    A-D letters must agree ("both A and B seem plausible" stays unparseable).
    """
    cue = _MCQ_CUE_RE.search(response)
    if cue:
        return cue.group(1).upper()
    letters = {m.group(1).upper() for m in _MCQ_STANDALONE_RE.finditer(response)}
    if len(letters) == 1:
        return letters.pop()
    return None


def mcq_exact_match(response: str, gold: str) -> bool:
    """Exact match against the gold option; unparseable responses score False."""
    if gold not in MCQ_OPTIONS:
        raise ValueError(f"gold option must be one of {MCQ_OPTIONS}, got {gold!r}")
    return extract_mcq_option(response) == gold


_RATING_RE = re.compile(r"\b(10|[1-9])\b")


def qa_score(
    response: str,
    reference: str,
    question: str,
    gateway: Gateway,
    library: PromptLibrary,
    profile: ModelProfile,
    trace_tag: str = "qa_score",
) -> int:
    """Model-rated answer quality on 1-10; the report layer scales to 100."""
    if not reference:
        raise ValueError("reference answer required for qa scoring")
    prompt = library.render_qa_score_prompt(question, reference, response)
    for attempt in range(2):
        reply = gateway.complete(
            ChatRequest(prompt.system, prompt.turns, profile, trace_tag=trace_tag)
        ).text
        match = _RATING_RE.search(reply)
        if match:
            return int(match.group(1))
        if attempt == 0:
            logger.debug("qa scorer reply unparseable, retrying once: %r", reply[:80])
    raise QaScoringError(f"no 1-10 rating in scorer reply: {reply[:80]!r}")


# ---------------------------------------------------------------------------
# Cohen's kappa
# ---------------------------------------------------------------------------


def cohens_kappa(pairs: Sequence[tuple[Hashable, Hashable]]) -> float:
    """Chance-corrected agreement (P_o - P_e) / (1 - P_e) over label pairs.

    Returns nan (with a logged diagnostic) when both raters are constant on
    the same label, where the statistic is undefined.
    """
    if not pairs:
        raise ValueError("kappa needs at least one pair")
    n = len(pairs)
    observed = sum(1 for a, b in pairs if a == b) / n
    marginals_a = Counter(a for a, _ in pairs)
    marginals_b = Counter(b for _, b in pairs)
    expected = sum(
        (marginals_a[label] / n) * (marginals_b[label] / n)
        for label in set(marginals_a) | set(marginals_b)
    )
    if expected == 1.0:
        logger.warning(
            "kappa undefined: both raters constant on the same label "
            "(P_o = P_e = 1); returning nan"
        )
        return math.nan
    return (observed - expected) / (1.0 - expected)


def load_kappa_pairs(path: str | Path) -> list[tuple[Any, Any]]:
    """Read rater pairs from JSONL rows {"rater_a": ..., "rater_b": ...}."""
    pairs: list[tuple[Any, Any]] = []
    for row in iter_jsonl(path):
        if "rater_a" not in row or "rater_b" not in row:
            raise ConfigError("kappa rows need rater_a and rater_b fields")
        pairs.append((row["rater_a"], row["rater_b"]))
    return pairs


# ---------------------------------------------------------------------------
# Run summary
# ---------------------------------------------------------------------------


@dataclass
class RunReport:
    n_queries: int
    crop_accuracy: float | None = None
    disease_accuracy: float | None = None
    mcq_accuracy: float | None = None
    qa_score_mean: float | None = None
    kappa: float | None = None
    error_counts: dict[str, int] = field(default_factory=dict)
    total_calls: int = 0
    mean_calls_per_query: float = 0.0
    skipped_missing_gold: int = 0
    unparseable_mcq: int = 0
    random_baseline: dict[str, float] | None = None
    seed: int | None = None

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"n_queries": self.n_queries}
        for name in ("crop_accuracy", "disease_accuracy", "mcq_accuracy",
                     "qa_score_mean", "kappa"):
            value = getattr(self, name)
            if value is not None:
                out[name] = value
        out["error_counts"] = self.error_counts
        out["total_calls"] = self.total_calls
        out["mean_calls_per_query"] = self.mean_calls_per_query
        out["skipped_missing_gold"] = self.skipped_missing_gold
        out["unparseable_mcq"] = self.unparseable_mcq
        if self.random_baseline is not None:
            out["random_baseline"] = self.random_baseline
        if self.seed is not None:
            out["seed"] = self.seed
        return out

    def format_table(self) -> str:
        rows: list[tuple[str, str]] = [("queries", str(self.n_queries))]
        for name, value in (
            ("crop accuracy", self.crop_accuracy),
            ("disease accuracy", self.disease_accuracy),
            ("mcq accuracy", self.mcq_accuracy),
        ):
            if value is not None:
                rows.append((name, f"{value:.2%}"))
        if self.qa_score_mean is not None:
            rows.append(("qa score (0-100)", f"{self.qa_score_mean:.1f}"))
        if self.kappa is not None:
            rows.append(("kappa", f"{self.kappa:.4f}"))
        rows.append(("total calls", str(self.total_calls)))
        rows.append(("calls/query", f"{self.mean_calls_per_query:.2f}"))
        if self.skipped_missing_gold:
            rows.append(("skipped (no gold)", str(self.skipped_missing_gold)))
        if self.unparseable_mcq:
            rows.append(("unparseable mcq", str(self.unparseable_mcq)))
        if self.random_baseline:
            for key, value in sorted(self.random_baseline.items()):
                rows.append((f"random {key}", f"{value:.2%}"))
        for category, count in sorted(self.error_counts.items()):
            rows.append((f"errors: {category}", str(count)))
        width = max(len(label) for label, _ in rows)
        return "\n".join(f"{label.ljust(width)}  {value}" for label, value in rows)


def _accuracy(flags: Iterable[bool]) -> float | None:
    flags = list(flags)
    if not flags:
        return None
    return sum(flags) / len(flags)


def summarize_run(
    records: Sequence[PipelineRecord],
    gold: dict[str, GoldLabel] | Sequence[GoldLabel],
    task: TaskKind,
    call_log: int | Sequence[Any] | None = None,
    *,
    compare_random: bool = False,
    seed: int = 0,
    qa_scores: dict[str, int] | None = None,
    kappa_pairs: Sequence[tuple[Hashable, Hashable]] | None = None,
    error_category_key: str = "error_category",
) -> RunReport:
    """Aggregate per-record outcomes into a RunReport.

    In comparison mode, the same metric is also computed over a seeded
    uniform draw from each record's candidate pair, giving the uplift of
    judge selection over random selection.
    """
    if not isinstance(gold, dict):
        gold = {label.question_id: label for label in gold}

    joined: list[tuple[PipelineRecord, GoldLabel]] = []
    skipped = 0
    for record in records:
        label = gold.get(record.question_id)
        if label is None:
            skipped += 1
            logger.warning("no gold label for %s; skipped", record.question_id)
            continue
        joined.append((record, label))

    n = len(joined)
    report = RunReport(n_queries=n, skipped_missing_gold=skipped, seed=seed if compare_random else None)

    rng = random.Random(seed)
    draws: dict[str, str] = {}
    if compare_random:
        for record, _ in joined:
            if record.generation_answer1 is not None and record.generation_answer2 is not None:
                draws[record.question_id] = (
                    record.generation_answer1 if rng.random() < 0.5 else record.generation_answer2
                )

    def selected_text(record: PipelineRecord) -> str:
        return record.generation_answer or ""

    if task in (TaskKind.RECOGNITION, TaskKind.KNOWLEDGE):
        crop_flags = [
            keyword_match(selected_text(r), g.crop_keywords)
            for r, g in joined
            if g.crop_keywords
        ]
        disease_flags = [
            keyword_match(selected_text(r), g.disease_keywords)
            for r, g in joined
            if g.disease_keywords
        ]
        report.crop_accuracy = _accuracy(crop_flags)
        report.disease_accuracy = _accuracy(disease_flags)
        if compare_random:
            baseline: dict[str, float] = {}
            crop_rand = _accuracy(
                [
                    keyword_match(draws.get(r.question_id, ""), g.crop_keywords)
                    for r, g in joined
                    if g.crop_keywords and r.question_id in draws
                ]
            )
            disease_rand = _accuracy(
                [
                    keyword_match(draws.get(r.question_id, ""), g.disease_keywords)
                    for r, g in joined
                    if g.disease_keywords and r.question_id in draws
                ]
            )
            if crop_rand is not None:
                baseline["crop_accuracy"] = crop_rand
            if disease_rand is not None:
                baseline["disease_accuracy"] = disease_rand
            report.random_baseline = baseline or None

    if task is TaskKind.MCQ:
        flags: list[bool] = []
        for record, label in joined:
            if label.mcq_option is None:
                continue
            option = extract_mcq_option(selected_text(record))
            if option is None:
                report.unparseable_mcq += 1
            flags.append(option == label.mcq_option)
        report.mcq_accuracy = _accuracy(flags)
        if compare_random:
            rand_flags = [
                mcq_exact_match(draws[r.question_id], g.mcq_option)
                for r, g in joined
                if g.mcq_option is not None and r.question_id in draws
            ]
            rand_acc = _accuracy(rand_flags)
            report.random_baseline = (
                {"mcq_accuracy": rand_acc} if rand_acc is not None else None
            )

    if qa_scores:
        usable = [qa_scores[r.question_id] for r, _ in joined if r.question_id in qa_scores]
        if usable:
            report.qa_score_mean = (sum(usable) / len(usable)) * 10.0

    if kappa_pairs:
        report.kappa = cohens_kappa(list(kappa_pairs))

    counts: Counter[str] = Counter()
    for record, _ in joined:
        category = record.extras.get(error_category_key)
        if isinstance(category, str) and category:
            counts[category] += 1
        stage_error = record.extras.get("pipeline_error")
        if isinstance(stage_error, dict) and stage_error.get("stage"):
            counts[f"stage:{stage_error['stage']}"] += 1
    report.error_counts = dict(counts)

    if call_log is not None:
        total = call_log if isinstance(call_log, int) else len(call_log)
        report.total_calls = total
        report.mean_calls_per_query = total / n if n else 0.0
    return report
