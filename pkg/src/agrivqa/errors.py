"""Exception hierarchy shared across the pipeline."""

from __future__ import annotations


class PipelineError(Exception):
    """Base class for all errors raised by this package."""


class RecordParseError(PipelineError):
    """Malformed JSON input; carries the byte offset of the failure."""

    def __init__(self, message: str, byte_offset: int | None = None):
        super().__init__(message)
        self.byte_offset = byte_offset


class RecordValidationError(PipelineError):
    """A record violates a schema invariant; names the offending field(s)."""

    def __init__(self, message: str, fields: tuple[str, ...] = ()):
        super().__init__(message)
        self.fields = fields


class TransportError(PipelineError):
    """All retries exhausted against the backend."""

    def __init__(self, message: str, attempts: int):
        super().__init__(message)
        self.attempts = attempts


class BackendRejectionError(PipelineError):
    """Non-transient backend rejection (auth, bad request); never retried."""


class MockScriptExhaustedError(BackendRejectionError):
    """A request arrived after the mock script ran out of matching entries."""


class ReplyParseError(PipelineError):
    """A model reply could not be parsed into the expected structure."""


class CaptionScoringError(PipelineError):
    """The caption scorer reply was unusable (e.g. missing dimensions)."""


class CandidateGenerationError(PipelineError):
    """Stage 2 produced no usable candidate pair."""


class JudgeError(PipelineError):
    """Stage 3 judge reply was unusable after the reformat retry."""


class QaScoringError(PipelineError):
    """The QA scorer reply carried no usable rating."""


class ConfigError(PipelineError):
    """Invalid or inconsistent configuration."""


class SessionNotFoundError(PipelineError):
    """Unknown session id or exchange index."""


class StageError(PipelineError):
    """Wraps a failure inside one pipeline stage, tagging the stage name."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"{stage}: {cause}")
        self.stage = stage
        self.cause = cause
