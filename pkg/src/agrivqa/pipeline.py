"""End-to-end orchestration: single queries and resumable batch runs.

A query flows caption -> candidates -> judgment; the record accumulates the
fields of each stage. Batch runs persist per-stage JSONL snapshots, the
call-accounting log, and the config used, and skip already-completed
question ids on rerun.
"""

from __future__ import annotations

import json
import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from random import Random

from .captioning import CaptionEngine, CaptionTrace, round_half_up
from .config import AppConfig, PipelineConfig
from .errors import PipelineError, StageError
from .gateway import CallLog, Gateway
from .judging import JudgeEngine, Judgment
from .prompts import ExemplarSet, PromptLibrary
from .records import PipelineRecord, TaskKind, load_records, serialize_record
from .vqa import CandidatePair, VqaEngine

logger = logging.getLogger(__name__)

STAGE_FILES = {
    "caption": "after_caption.jsonl",
    "vqa": "after_vqa.jsonl",
    "judge": "after_judge.jsonl",
}


def expected_call_count(refinements: int, dual_call: bool) -> int:
    """Declared call plan: 2 per caption round, 1 or 2 for VQA, 1 for judge."""
    return 2 * (1 + refinements) + (2 if dual_call else 1) + 1


@dataclass
class QueryResult:
    record: PipelineRecord
    trace: CaptionTrace | None = None
    pair: CandidatePair | None = None
    judgment: Judgment | None = None
    error: StageError | None = None


class PipelineRunner:
    """Wires the three stage engines over one gateway and config."""

    def __init__(self, app: AppConfig, gateway: Gateway | None = None):
        app.validate_roles()
        self.app = app
        self.config: PipelineConfig = app.pipeline
        self.gateway = gateway if gateway is not None else app.build_gateway()
        self.library: PromptLibrary = app.build_library()
        lexicon = app.build_lexicon()
        # Configured weights also fix the dimension names (renaming needs a
        # matching caption_score_system template override).
        caption_kwargs = {}
        if self.config.weights:
            caption_kwargs["dimensions"] = tuple(self.config.weights.keys())
        self.caption_engine = CaptionEngine(
            self.gateway,
            self.library,
            caption_profile=app.profile(self.config.caption_profile),
            scorer_profile=app.profile(self.config.scorer_profile),
            threshold=self.config.threshold,
            n_max=self.config.n_max,
            weights=self.config.weights,
            lexicon=lexicon,
            **caption_kwargs,
        )
        self.vqa_engine = VqaEngine(
            self.gateway,
            self.library,
            profile=app.profile(self.config.vqa_profile),
            shots=self.config.shots,
            dual_call=self.config.dual_call,
        )
        self.judge_engine = JudgeEngine(
            self.gateway,
            self.library,
            profile=app.profile(self.config.judge_profile),
            margin=self.config.tiebreak_margin,
            swap=self.config.swap_judge,
        )
        self._rng = Random(self.config.seed)

    @property
    def call_log(self) -> CallLog:
        return self.gateway.log

    def vqa_exemplars(self, task: TaskKind) -> ExemplarSet:
        exemplars = self.app.exemplars_for(task)
        if self.config.random_exemplars:
            return exemplars.select(self.config.shots, rng=Random(self.config.seed))
        return exemplars

    # -- stages ------------------------------------------------------------

    def run_caption_stage(self, image: str, tag_prefix: str = "") -> CaptionTrace:
        return self.caption_engine.refine_loop(
            image, self.app.caption_exemplars(), tag_prefix=tag_prefix
        )

    def apply_caption_stage(self, record: PipelineRecord, trace: CaptionTrace) -> PipelineRecord:
        accepted = trace.accepted
        return record.evolve(
            image_caption=accepted.caption,
            rating=round_half_up(accepted.assessment.aggregate),
            reasoning=accepted.assessment.reasoning,
            suggestions=accepted.assessment.suggestions,
            evaluated=True,
            optimized=trace.iterations_used > 0,
        )

    def run_vqa_stage(
        self, record: PipelineRecord, task: TaskKind, tag_prefix: str = ""
    ) -> CandidatePair:
        assert record.image_caption is not None
        return self.vqa_engine.generate_candidates(
            record.image,
            record.image_caption,
            record.question,
            task,
            self.vqa_exemplars(task),
            trace_tag=f"{tag_prefix}vqa",
        )

    def run_judge_stage(
        self,
        record: PipelineRecord,
        pair: CandidatePair,
        task: TaskKind,
        tag_prefix: str = "",
    ) -> Judgment:
        assert record.image_caption is not None
        return self.judge_engine.judge(
            pair,
            record.answer,
            record.question,
            record.image_caption,
            task,
            trace_tag=f"{tag_prefix}judge",
        )

    @staticmethod
    def apply_judge_stage(record: PipelineRecord, judgment: Judgment) -> PipelineRecord:
        return record.evolve(
            generation_answer=judgment.selected_text,
            selected_answer=judgment.choice,
            selected_score=judgment.selected_score,
            unselected_score=judgment.unselected_score,
            evaluation_reason=judgment.rationale,
        )

    # -- orchestration -------------------------------------------------------

    def run_query(self, record: PipelineRecord, on_stage=None) -> QueryResult:
        """Execute all three stages; on error, return the record populated up
        to the failing stage with an error annotation instead of raising."""
        task = self.config.task
        prefix = f"{record.question_id}/"
        result = QueryResult(record=record)

        def fail(stage: str, exc: Exception) -> QueryResult:
            logger.error("query %s failed at %s: %s", record.question_id, stage, exc)
            result.error = StageError(stage, exc)
            result.record = result.record.with_extra(
                "pipeline_error", {"stage": stage, "message": str(exc)}
            )
            return result

        try:
            result.trace = self.run_caption_stage(record.image, tag_prefix=prefix)
            result.record = self.apply_caption_stage(result.record, result.trace)
        except PipelineError as exc:
            return fail("caption", exc)
        if on_stage:
            on_stage("caption", result.record)

        try:
            result.pair = self.run_vqa_stage(result.record, task, tag_prefix=prefix)
            result.record = result.record.evolve(
                generation_answer1=result.pair.answer1,
                generation_answer2=result.pair.answer2,
            )
        except PipelineError as exc:
            return fail("vqa", exc)
        if on_stage:
            on_stage("vqa", result.record)

        try:
            result.judgment = self.run_judge_stage(
                result.record, result.pair, task, tag_prefix=prefix
            )
            result.record = self.apply_judge_stage(result.record, result.judgment)
        except PipelineError as exc:
            return fail("judge", exc)
        if on_stage:
            on_stage("judge", result.record)
        return result


@dataclass
class BatchResult:
    run_dir: Path
    n_processed: int
    n_skipped: int
    n_errors: int


class _StageWriters:
    """Synchronized append-only JSONL writers, one per stage snapshot."""

    def __init__(self, run_dir: Path):
        self._lock = threading.Lock()
        self._paths = {stage: run_dir / name for stage, name in STAGE_FILES.items()}
        self._error_path = run_dir / "errors.jsonl"

    def write(self, stage: str, record: PipelineRecord) -> None:
        with self._lock:
            with open(self._paths[stage], "a", encoding="utf-8") as fh:
                fh.write(serialize_record(record) + "\n")

    def write_error(self, record: PipelineRecord) -> None:
        with self._lock:
            with open(self._error_path, "a", encoding="utf-8") as fh:
                fh.write(serialize_record(record) + "\n")


def completed_question_ids(run_dir: Path) -> set[str]:
    path = run_dir / STAGE_FILES["judge"]
    done: set[str] = set()
    if path.exists():
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    done.add(json.loads(line)["question_id"])
    return done


def run_batch(
    runner: PipelineRunner, dataset: str | Path, run_dir: str | Path | None = None
) -> BatchResult:
    """Process a JSONL dataset over a bounded worker pool, resumably.

    Completed records land in after_judge.jsonl and are skipped on rerun;
    failed records go to errors.jsonl and are retried next time.
    """
    records = load_records(dataset)
    run_path = Path(run_dir) if run_dir is not None else Path(runner.config.output_dir)
    try:
        run_path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise PipelineError(f"cannot create run directory {run_path}: {exc}") from exc

    (run_path / "config.json").write_text(
        json.dumps(runner.config.to_dict(), indent=2), encoding="utf-8"
    )

    done = completed_question_ids(run_path)
    pending = [r for r in records if r.question_id not in done]
    n_skipped = len(records) - len(pending)
    writers = _StageWriters(run_path)
    errors = 0
    errors_lock = threading.Lock()

    def work(record: PipelineRecord) -> None:
        nonlocal errors
        result = runner.run_query(record, on_stage=writers.write)
        if result.error is not None:
            with errors_lock:
                errors += 1
            writers.write_error(result.record)

    if pending:
        with ThreadPoolExecutor(max_workers=runner.config.workers) as pool:
            list(pool.map(work, pending))

    with open(run_path / "call_log.jsonl", "w", encoding="utf-8") as fh:
        for entry in runner.call_log.to_dicts():
            fh.write(json.dumps(entry) + "\n")

    logger.info(
        "batch complete: %d processed, %d skipped, %d errors -> %s",
        len(pending), n_skipped, errors, run_path,
    )
    return BatchResult(run_path, len(pending), n_skipped, errors)
