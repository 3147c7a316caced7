"""REST API for live diagnostic sessions and run reports.

The browser UI consumes exactly these endpoints; it computes nothing
itself. Sessions accept an uploaded image file or a server-side path.
"""

from __future__ import annotations

import json
import uuid
from pathlib import Path

from fastapi import FastAPI, HTTPException, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .errors import PipelineError, SessionNotFoundError
from .pipeline import PipelineRunner
from .sessions import Override, SessionService

MAX_UPLOAD_BYTES = 16 * 1024 * 1024


class QuestionBody(BaseModel):
    question: str


class OverrideBody(BaseModel):
    chosen: str
    text: str | None = None
    note: str = ""


def create_app(
    runner: PipelineRunner,
    sessions_dir: str | Path = "sessions",
    uploads_dir: str | Path = "uploads",
    runs_dir: str | Path = "runs",
    static_dir: str | Path | None = None,
) -> FastAPI:
    app = FastAPI(title="agrivqa session service")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    service = SessionService(runner, sessions_dir)
    uploads = Path(uploads_dir)
    runs = Path(runs_dir)
    app.state.service = service

    @app.post("/sessions")
    async def create_session(request: Request):
        """Accepts a multipart image upload, a form image_path, or JSON
        {"image_path": ...}."""
        content_type = request.headers.get("content-type", "")
        ref: str | None = None
        if "json" in content_type:
            body = await request.json()
            ref = body.get("image_path") if isinstance(body, dict) else None
        else:
            form = await request.form()
            upload = form.get("image")
            if upload is not None and hasattr(upload, "read"):
                data = await upload.read()
                if len(data) > MAX_UPLOAD_BYTES:
                    raise HTTPException(413, "image upload exceeds the size limit")
                uploads.mkdir(parents=True, exist_ok=True)
                suffix = Path(upload.filename or "upload.img").suffix or ".img"
                target = uploads / f"{uuid.uuid4().hex[:12]}{suffix}"
                target.write_bytes(data)
                ref = str(target)
            else:
                path_value = form.get("image_path")
                ref = path_value if isinstance(path_value, str) else None
        if not ref:
            raise HTTPException(422, "provide an image upload or image_path")
        try:
            session = service.create_session(ref)
        except PipelineError as exc:
            raise HTTPException(422, str(exc)) from exc
        return {"session_id": session.session_id, "image": session.image}

    @app.post("/sessions/{session_id}/questions")
    def ask_question(session_id: str, body: QuestionBody):
        try:
            exchange, caption_computed = service.ask(session_id, body.question)
        except SessionNotFoundError as exc:
            raise HTTPException(404, str(exc)) from exc
        except PipelineError as exc:
            raise HTTPException(422, str(exc)) from exc
        session = service.get_session(session_id)
        trace = session.caption_trace
        assert trace is not None
        accepted = trace.accepted
        return {
            "session_id": session_id,
            "index": len(session.exchanges) - 1,
            "caption": accepted.caption,
            "caption_score": accepted.assessment.aggregate,
            "caption_dimension_scores": accepted.assessment.dimension_scores,
            "caption_recomputed": caption_computed,
            "exchange": exchange.to_dict(),
        }

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str):
        try:
            session = service.get_session(session_id)
        except SessionNotFoundError as exc:
            raise HTTPException(404, str(exc)) from exc
        return session.to_dict()

    @app.get("/sessions")
    def list_sessions():
        return {
            "sessions": [
                {
                    "session_id": s.session_id,
                    "image": s.image,
                    "created_at": s.created_at,
                    "n_exchanges": len(s.exchanges),
                }
                for s in service.list_sessions()
            ]
        }

    @app.post("/sessions/{session_id}/exchanges/{index}/override")
    def record_override(session_id: str, index: int, body: OverrideBody):
        try:
            override = Override(chosen=body.chosen, note=body.note, text=body.text)
            session = service.record_override(session_id, index, override)
        except SessionNotFoundError as exc:
            raise HTTPException(404, str(exc)) from exc
        except PipelineError as exc:
            raise HTTPException(422, str(exc)) from exc
        return session.exchanges[index].to_dict()

    @app.get("/runs/{run_id}/report")
    def run_report(run_id: str):
        path = runs / run_id / "report.json"
        if not path.exists():
            raise HTTPException(404, f"no report for run {run_id!r}")
        return json.loads(path.read_text(encoding="utf-8"))

    if static_dir is not None and Path(static_dir).is_dir():
        app.mount("/ui", StaticFiles(directory=str(static_dir), html=True), name="ui")

    return app
