"""Interactive diagnostic sessions: one caption per image, many questions.

The refinement loop runs once per session; every exchange reuses the
accepted caption. Practitioner overrides are appended next to the original
judgment, never in place of it, with prior overrides kept in an audit list.
"""

from __future__ import annotations

import json
import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .captioning import CaptionTrace
from .errors import PipelineError, SessionNotFoundError
from .judging import Judgment
from .pipeline import PipelineRunner
from .records import PipelineRecord
from .vqa import CandidatePair

OVERRIDE_CHOICES = ("answer1", "answer2", "external")


@dataclass(frozen=True)
class Override:
    chosen: str  # answer1 | answer2 | external
    note: str
    text: str | None = None
    created_at: float = 0.0

    def __post_init__(self) -> None:
        if self.chosen not in OVERRIDE_CHOICES:
            raise PipelineError(
                f"override chosen must be one of {OVERRIDE_CHOICES}, got {self.chosen!r}"
            )
        if self.chosen == "external" and not (self.text and self.text.strip()):
            raise PipelineError("external override requires replacement text")

    def to_dict(self) -> dict[str, Any]:
        return {
            "chosen": self.chosen,
            "note": self.note,
            "text": self.text,
            "created_at": self.created_at,
        }


@dataclass
class Exchange:
    question: str
    pair: CandidatePair
    judgment: Judgment
    override: Override | None = None
    override_history: list[Override] = field(default_factory=list)
    created_at: float = 0.0

    def to_dict(self) -> dict[str, Any]:
        return {
            "question": self.question,
            "candidates": self.pair.to_dict(),
            "judgment": self.judgment.to_dict(),
            "override": self.override.to_dict() if self.override else None,
            "override_history": [o.to_dict() for o in self.override_history],
            "created_at": self.created_at,
        }


@dataclass
class Session:
    session_id: str
    image: str
    caption_trace: CaptionTrace | None = None
    exchanges: list[Exchange] = field(default_factory=list)
    created_at: float = 0.0

    @property
    def caption(self) -> str | None:
        if self.caption_trace is None:
            return None
        return self.caption_trace.accepted.caption

    def to_dict(self) -> dict[str, Any]:
        return {
            "session_id": self.session_id,
            "image": self.image,
            "caption_trace": self.caption_trace.to_dict() if self.caption_trace else None,
            "exchanges": [e.to_dict() for e in self.exchanges],
            "created_at": self.created_at,
        }


class SessionService:
    """File-backed session store over one pipeline runner.

    Requests on distinct sessions may run concurrently; requests on the
    same session serialize on a per-session lock.
    """

    def __init__(self, runner: PipelineRunner, sessions_dir: str | Path):
        self.runner = runner
        self.sessions_dir = Path(sessions_dir)
        self.sessions_dir.mkdir(parents=True, exist_ok=True)
        self._sessions: dict[str, Session] = {}
        self._locks: dict[str, threading.Lock] = {}
        self._registry_lock = threading.Lock()

    # -- persistence ------------------------------------------------------

    def _path(self, session_id: str) -> Path:
        return self.sessions_dir / f"{session_id}.json"

    def _persist(self, session: Session) -> None:
        self._path(session.session_id).write_text(
            json.dumps(session.to_dict(), ensure_ascii=False, indent=2), encoding="utf-8"
        )

    def _lock_for(self, session_id: str) -> threading.Lock:
        with self._registry_lock:
            return self._locks.setdefault(session_id, threading.Lock())

    # -- operations -------------------------------------------------------

    def create_session(self, image: str) -> Session:
        if not image or not str(image).strip():
            raise PipelineError("session requires an image reference")
        session = Session(
            session_id=uuid.uuid4().hex[:12],
            image=str(image),
            created_at=time.time(),
        )
        with self._registry_lock:
            self._sessions[session.session_id] = session
            self._locks[session.session_id] = threading.Lock()
        self._persist(session)
        return session

    def get_session(self, session_id: str) -> Session:
        with self._registry_lock:
            session = self._sessions.get(session_id)
        if session is None:
            raise SessionNotFoundError(f"unknown session {session_id!r}")
        return session

    def list_sessions(self) -> list[Session]:
        with self._registry_lock:
            return sorted(self._sessions.values(), key=lambda s: s.created_at)

    def ensure_caption(self, session_id: str) -> tuple[Session, bool]:
        """Run the caption stage if this session has none yet.

        Returns (session, computed_now).
        """
        session = self.get_session(session_id)
        with self._lock_for(session_id):
            if session.caption_trace is not None:
                return session, False
            if not session.image:
                raise PipelineError("session has no image attached")
            session.caption_trace = self.runner.run_caption_stage(
                session.image, tag_prefix=f"session:{session_id}/"
            )
            self._persist(session)
            return session, True

    def ask(self, session_id: str, question: str) -> tuple[Exchange, bool]:
        """Answer one question on the session's cached caption.

        Returns (exchange, caption_computed_now). Stage 1 runs at most once
        per session regardless of how many questions are asked.
        """
        if not question or not question.strip():
            raise PipelineError("question must be non-empty")
        session = self.get_session(session_id)
        with self._lock_for(session_id):
            caption_computed = False
            if session.caption_trace is None:
                if not session.image:
                    raise PipelineError("session has no image attached")
                session.caption_trace = self.runner.run_caption_stage(
                    session.image, tag_prefix=f"session:{session_id}/"
                )
                caption_computed = True

            record = PipelineRecord(
                question_id=f"{session_id}-{len(session.exchanges)}",
                image=session.image,
                question=question,
            )
            record = self.runner.apply_caption_stage(record, session.caption_trace)
            task = self.runner.config.task
            prefix = f"session:{session_id}/"
            pair = self.runner.run_vqa_stage(record, task, tag_prefix=prefix)
            record = record.evolve(
                generation_answer1=pair.answer1, generation_answer2=pair.answer2
            )
            judgment = self.runner.run_judge_stage(record, pair, task, tag_prefix=prefix)
            exchange = Exchange(
                question=question, pair=pair, judgment=judgment, created_at=time.time()
            )
            session.exchanges.append(exchange)
            self._persist(session)
            return exchange, caption_computed

    def record_override(self, session_id: str, index: int, override: Override) -> Session:
        """Attach a practitioner override to one exchange.

        The judge's original judgment is never mutated; a replaced override
        moves into the exchange's audit history.
        """
        session = self.get_session(session_id)
        with self._lock_for(session_id):
            if not 0 <= index < len(session.exchanges):
                raise SessionNotFoundError(
                    f"session {session_id!r} has no exchange {index}"
                )
            exchange = session.exchanges[index]
            if exchange.override is not None:
                exchange.override_history.append(exchange.override)
            exchange.override = Override(
                chosen=override.chosen,
                note=override.note,
                text=override.text,
                created_at=time.time(),
            )
            self._persist(session)
            return session
