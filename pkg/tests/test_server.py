"""REST contract: session lifecycle, override endpoint, run reports."""

from __future__ import annotations

import json

from fastapi.testclient import TestClient

from agrivqa.config import AppConfig, PipelineConfig
from agrivqa.gateway import BackoffPolicy, CallLog, Gateway, MockBackend, MockEntry
from agrivqa.pipeline import PipelineRunner
from agrivqa.server import create_app

from conftest import caption_reply, diag_scores, judge_reply, score_reply, vqa_reply


def scripted_client(tmp_path, script) -> TestClient:
    entries = [MockEntry(match, reply=reply) for match, reply in script]
    gateway = Gateway(
        MockBackend(entries),
        log=CallLog(),
        backoff=BackoffPolicy(initial=0, sleep=lambda _s: None),
    )
    runner = PipelineRunner(AppConfig(pipeline=PipelineConfig(workers=1)), gateway=gateway)
    app = create_app(
        runner,
        sessions_dir=tmp_path / "sessions",
        uploads_dir=tmp_path / "uploads",
        runs_dir=tmp_path / "runs",
    )
    return TestClient(app)


def tomato_script(questions: list[str]) -> list[tuple[str, str]]:
    caption = (
        "Compound pinnate leaf exhibiting concentric ring-shaped necrotic "
        "lesions (target-spot morphology), dark brown centres surrounded by "
        "chlorotic halos; lesions concentrated on older lower leaves."
    )
    script = [
        ("[image:", caption_reply(caption)),
        ("Description to evaluate:", score_reply(9)),
    ]
    for q in questions:
        script.append(
            (f"Question: {q}", vqa_reply(
                "The symptoms indicate early blight (Alternaria solani); "
                "rotate fungicides.",
                "The plant is a tomato with compound pinnate leaves.",
            ))
        )
        script.append(
            (f"Question: {q}", judge_reply(
                1,
                "Answer 1 provides precise pathogen identification, detailed "
                "symptom characterisation, and an actionable treatment "
                "recommendation; Answer 2 accurately describes plant anatomy "
                "but offers limited guidance for management decisions.",
                diag_scores(1.0, 1.0, 1.0, 1.0, 0.8),  # 4.8
                diag_scores(1.0, 0.5, 0.9, 0.9, 0.9),  # 4.2
            ))
        )
    return script


def test_create_session_by_path(tmp_path):
    client = scripted_client(tmp_path, [(None, "unused")])
    response = client.post("/sessions", data={"image_path": "leaf.jpg"})
    assert response.status_code == 200
    body = response.json()
    assert body["session_id"]
    assert body["image"] == "leaf.jpg"


def test_create_session_by_upload(tmp_path):
    client = scripted_client(tmp_path, [(None, "unused")])
    response = client.post(
        "/sessions",
        files={"image": ("leaf.jpg", b"\x89PNG fake bytes", "image/png")},
    )
    assert response.status_code == 200
    stored = response.json()["image"]
    assert stored.endswith(".jpg")
    assert (tmp_path / "uploads").exists()


def test_create_session_by_json_path(tmp_path):
    client = scripted_client(tmp_path, [(None, "unused")])
    response = client.post("/sessions", json={"image_path": "leaf.jpg"})
    assert response.status_code == 200
    assert response.json()["image"] == "leaf.jpg"


def test_create_session_requires_image(tmp_path):
    client = scripted_client(tmp_path, [(None, "unused")])
    assert client.post("/sessions", data={}).status_code == 422


def test_oversized_upload_rejected(tmp_path, monkeypatch):
    import agrivqa.server as server_mod

    monkeypatch.setattr(server_mod, "MAX_UPLOAD_BYTES", 10)
    client = scripted_client(tmp_path, [(None, "unused")])
    response = client.post(
        "/sessions", files={"image": ("big.jpg", b"x" * 100, "image/jpeg")}
    )
    assert response.status_code == 413


def test_question_flow_returns_audit_payload(tmp_path):
    client = scripted_client(tmp_path, tomato_script(["What disease is this?", "Second?"]))
    sid = client.post("/sessions", data={"image_path": "tomato.jpg"}).json()["session_id"]

    first = client.post(f"/sessions/{sid}/questions", json={"question": "What disease is this?"})
    assert first.status_code == 200
    body = first.json()
    assert body["caption_recomputed"] is True
    assert body["caption_score"] == 9.0
    assert "target-spot" in body["caption"]
    exchange = body["exchange"]
    assert exchange["judgment"]["choice"] == "answer1"
    assert exchange["judgment"]["selected_score"] == 4.8
    assert exchange["judgment"]["unselected_score"] == 4.2
    assert exchange["judgment"]["rationale"].startswith("Answer 1 provides precise")
    assert exchange["candidates"]["answer1"]
    assert exchange["candidates"]["answer2"]
    assert exchange["judgment"]["scorecards"]["answer1"]["total"] == 4.8

    second = client.post(f"/sessions/{sid}/questions", json={"question": "Second?"})
    assert second.json()["caption_recomputed"] is False


def test_get_full_session(tmp_path):
    client = scripted_client(tmp_path, tomato_script(["q?"]))
    sid = client.post("/sessions", data={"image_path": "tomato.jpg"}).json()["session_id"]
    client.post(f"/sessions/{sid}/questions", json={"question": "q?"})
    body = client.get(f"/sessions/{sid}").json()
    assert body["caption_trace"]["iterations"]
    assert len(body["exchanges"]) == 1


def test_unknown_session_404(tmp_path):
    client = scripted_client(tmp_path, [(None, "unused")])
    assert client.get("/sessions/zzz").status_code == 404
    assert (
        client.post("/sessions/zzz/questions", json={"question": "q"}).status_code == 404
    )


def test_override_endpoint_appends(tmp_path):
    client = scripted_client(tmp_path, tomato_script(["q?"]))
    sid = client.post("/sessions", data={"image_path": "tomato.jpg"}).json()["session_id"]
    client.post(f"/sessions/{sid}/questions", json={"question": "q?"})
    response = client.post(
        f"/sessions/{sid}/exchanges/0/override",
        json={"chosen": "answer2", "note": "crop id matters more here"},
    )
    assert response.status_code == 200
    body = response.json()
    assert body["judgment"]["choice"] == "answer1"
    assert body["override"]["chosen"] == "answer2"


def test_override_bad_index_404(tmp_path):
    client = scripted_client(tmp_path, tomato_script(["q?"]))
    sid = client.post("/sessions", data={"image_path": "tomato.jpg"}).json()["session_id"]
    client.post(f"/sessions/{sid}/questions", json={"question": "q?"})
    response = client.post(
        f"/sessions/{sid}/exchanges/9/override", json={"chosen": "answer2", "note": ""}
    )
    assert response.status_code == 404


def test_invalid_override_choice_422(tmp_path):
    client = scripted_client(tmp_path, tomato_script(["q?"]))
    sid = client.post("/sessions", data={"image_path": "tomato.jpg"}).json()["session_id"]
    client.post(f"/sessions/{sid}/questions", json={"question": "q?"})
    response = client.post(
        f"/sessions/{sid}/exchanges/0/override", json={"chosen": "answer9", "note": ""}
    )
    assert response.status_code == 422


def test_run_report_endpoint(tmp_path):
    client = scripted_client(tmp_path, [(None, "unused")])
    run_dir = tmp_path / "runs" / "r1"
    run_dir.mkdir(parents=True)
    (run_dir / "report.json").write_text(json.dumps({"n_queries": 5}), encoding="utf-8")
    assert client.get("/runs/r1/report").json() == {"n_queries": 5}
    assert client.get("/runs/missing/report").status_code == 404


def test_list_sessions(tmp_path):
    client = scripted_client(tmp_path, [(None, "unused")])
    client.post("/sessions", data={"image_path": "a.jpg"})
    client.post("/sessions", data={"image_path": "b.jpg"})
    body = client.get("/sessions").json()
    assert len(body["sessions"]) == 2
