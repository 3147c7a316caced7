"""Caption-gated dual-answer VQA with judge selection for crop diagnosis."""

from .captioning import CaptionEngine, CaptionTrace, QualityAssessment
from .gateway import (
    CallLog,
    ChatRequest,
    ChatResponse,
    Gateway,
    MockBackend,
    MockEntry,
    ModelProfile,
    script_mock,
)
from .judging import Judgment, Scorecard, aggregate_score, apply_tiebreak
from .metrics import (
    GoldLabel,
    RunReport,
    cohens_kappa,
    keyword_match,
    mcq_exact_match,
    summarize_run,
)
from .pipeline import PipelineRunner, run_batch
from .prompts import (
    BannedTermLexicon,
    DEFAULT_LEXICON,
    ExemplarSet,
    PromptLibrary,
    detect_banned_terms,
)
from .records import PipelineRecord, TaskKind, parse_record, serialize_record
from .sessions import Override, SessionService
from .vqa import CandidatePair, Viewpoint, viewpoint_pair

__all__ = [
    "BannedTermLexicon",
    "CallLog",
    "CandidatePair",
    "CaptionEngine",
    "CaptionTrace",
    "ChatRequest",
    "ChatResponse",
    "DEFAULT_LEXICON",
    "ExemplarSet",
    "Gateway",
    "GoldLabel",
    "Judgment",
    "MockBackend",
    "MockEntry",
    "ModelProfile",
    "Override",
    "PipelineRecord",
    "PipelineRunner",
    "PromptLibrary",
    "QualityAssessment",
    "RunReport",
    "Scorecard",
    "SessionService",
    "TaskKind",
    "Viewpoint",
    "aggregate_score",
    "apply_tiebreak",
    "cohens_kappa",
    "detect_banned_terms",
    "keyword_match",
    "mcq_exact_match",
    "parse_record",
    "run_batch",
    "script_mock",
    "serialize_record",
    "summarize_run",
    "viewpoint_pair",
]

__version__ = "0.1.0"
