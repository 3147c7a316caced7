"""Command-line entry points: caption, ask, run, eval, kappa, serve."""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

from .config import load_config
from .errors import PipelineError, QaScoringError
from .metrics import cohens_kappa, load_gold_labels, load_kappa_pairs, qa_score, summarize_run
from .pipeline import PipelineRunner, run_batch
from .records import PipelineRecord, TaskKind, load_records, serialize_record


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="agrivqa",
        description="Caption-gated dual-answer VQA pipeline for crop diagnosis",
    )
    parser.add_argument("--config", help="TOML config file")
    parser.add_argument("--seed", type=int, help="override the run seed")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("caption", help="run the caption refinement loop on one image")
    p.add_argument("image")

    p = sub.add_parser("ask", help="run the full pipeline for one image and question")
    p.add_argument("image")
    p.add_argument("question")

    p = sub.add_parser("run", help="process a JSONL dataset in batch")
    p.add_argument("dataset")
    p.add_argument("--out", help="run directory (default from config)")
    p.add_argument("--workers", type=int, help="worker pool size")

    p = sub.add_parser("eval", help="score a completed run against gold labels")
    p.add_argument("run_dir")
    p.add_argument("gold")
    p.add_argument("--task", choices=[t.value for t in TaskKind])
    p.add_argument("--compare-random", action="store_true",
                   help="also score a seeded random draw from each candidate pair")
    p.add_argument("--qa", action="store_true",
                   help="model-score knowledge answers against references")

    p = sub.add_parser("kappa", help="Cohen's kappa over a JSONL file of rater pairs")
    p.add_argument("pairs")

    p = sub.add_parser("serve", help="start the session REST service")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--static", help="directory of built UI assets to mount at /ui")

    return parser


def _print_trace(trace) -> None:
    for i, it in enumerate(trace.iterations):
        marker = "*" if i == trace.accepted_index else " "
        print(f"{marker} [{i}] score {it.assessment.aggregate:.2f}  {it.caption[:90]}")
        if it.banned_hits:
            terms = ", ".join(h.term for h in it.banned_hits)
            print(f"      lexicon hits: {terms}")
    status = "converged" if trace.converged else "budget exhausted (best-so-far)"
    print(f"caption accepted after {trace.iterations_used} refinement(s); {status}")


def cmd_caption(args, runner: PipelineRunner) -> int:
    trace = runner.run_caption_stage(args.image)
    _print_trace(trace)
    print()
    print(trace.accepted.caption)
    return 0


def cmd_ask(args, runner: PipelineRunner) -> int:
    record = PipelineRecord(question_id="cli", image=args.image, question=args.question)
    result = runner.run_query(record)
    if result.trace is not None:
        _print_trace(result.trace)
    if result.error is not None:
        print(f"pipeline failed at stage {result.error.stage}: {result.error.cause}")
        print(serialize_record(result.record))
        return 1
    judgment = result.judgment
    assert result.pair is not None and judgment is not None
    print()
    print(f"Answer 1 ({result.pair.viewpoint1.id}): {result.pair.answer1}")
    print(f"Answer 2 ({result.pair.viewpoint2.id}): {result.pair.answer2}")
    print()
    print(
        f"judge selected {judgment.choice} "
        f"({judgment.selected_score:.1f} vs {judgment.unselected_score:.1f})"
    )
    print(f"rationale: {judgment.rationale}")
    return 0


def cmd_run(args, runner: PipelineRunner) -> int:
    if args.workers:
        from dataclasses import replace

        runner.config = replace(runner.config, workers=args.workers)
    result = run_batch(runner, args.dataset, args.out)
    print(
        f"run directory: {result.run_dir}\n"
        f"processed {result.n_processed}, skipped {result.n_skipped}, "
        f"errors {result.n_errors}"
    )
    return 1 if result.n_errors else 0


def cmd_eval(args, runner: PipelineRunner) -> int:
    run_dir = Path(args.run_dir)
    records = load_records(run_dir / "after_judge.jsonl")
    gold = load_gold_labels(args.gold)
    task = TaskKind(args.task) if args.task else runner.config.task

    call_log_path = run_dir / "call_log.jsonl"
    total_calls = 0
    if call_log_path.exists():
        with open(call_log_path, encoding="utf-8") as fh:
            total_calls = sum(1 for line in fh if line.strip())

    qa_scores = None
    qa_failures = 0
    if args.qa:
        qa_scores = {}
        library = runner.library
        profile = runner.app.profile(runner.config.scorer_profile)
        for record in records:
            label = gold.get(record.question_id)
            if label is None or not label.reference_answer or not record.generation_answer:
                continue
            try:
                qa_scores[record.question_id] = qa_score(
                    record.generation_answer,
                    label.reference_answer,
                    record.question,
                    runner.gateway,
                    library,
                    profile,
                    trace_tag=f"{record.question_id}/qa_score",
                )
            except QaScoringError as exc:
                # Excluded from the mean, but counted in the report.
                qa_failures += 1
                print(f"qa scoring failed for {record.question_id}: {exc}", file=sys.stderr)

    report = summarize_run(
        records,
        gold,
        task,
        call_log=total_calls,
        compare_random=args.compare_random,
        seed=runner.config.seed,
        qa_scores=qa_scores,
    )
    if qa_failures:
        report.error_counts["qa_score_unparseable"] = qa_failures
    (run_dir / "report.json").write_text(
        json.dumps(report.to_dict(), indent=2), encoding="utf-8"
    )
    print(report.format_table())
    return 0


def cmd_kappa(args) -> int:
    pairs = load_kappa_pairs(args.pairs)
    value = cohens_kappa(pairs)
    if math.isnan(value):
        print("kappa undefined: both raters constant on the same label")
        return 1
    print(f"kappa = {value:.6f} over {len(pairs)} pairs")
    return 0


def cmd_serve(args, runner: PipelineRunner, app_config) -> int:
    import uvicorn

    from .server import create_app

    app = create_app(
        runner,
        sessions_dir=app_config.sessions_dir,
        uploads_dir=app_config.uploads_dir,
        runs_dir=app_config.runs_dir,
        static_dir=args.static,
    )
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )

    if args.command == "kappa":
        return cmd_kappa(args)

    try:
        app_config = load_config(args.config, seed=args.seed)
        runner = PipelineRunner(app_config)
    except PipelineError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2

    try:
        if args.command == "caption":
            return cmd_caption(args, runner)
        if args.command == "ask":
            return cmd_ask(args, runner)
        if args.command == "run":
            return cmd_run(args, runner)
        if args.command == "eval":
            return cmd_eval(args, runner)
        if args.command == "serve":
            return cmd_serve(args, runner, app_config)
    except PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
