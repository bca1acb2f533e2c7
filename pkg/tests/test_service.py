import json

import pytest
from fastapi.testclient import TestClient

from evrag.annotation import build_blinded_session, contains_condition_token
from evrag.catalog import chunk_catalog
from evrag.config import PipelineConfig
from evrag.embeddings import LocalHashEmbedder
from evrag.engine import Mode, run_benchmark
from evrag.errors import ValidationError
from evrag.index import build_index, save_index
from evrag.providers import MockTranscriptProvider
from evrag.scoring import score_archive, write_score_artifacts
from evrag.service import create_app, load_tokens

from conftest import make_catalog, make_questions, make_transcripts

TOKENS = {"ann1": "token-ann1", "ann2": "token-ann2"}


def auth(annotator="ann1"):
    return {"Authorization": f"Bearer {TOKENS[annotator]}"}


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    """Full service data directory: catalog, index, scored run, session."""
    root = tmp_path_factory.mktemp("svc")
    catalog = make_catalog(n_journal=12)
    questions = make_questions(5)
    transcripts = make_transcripts(questions, catalog)
    catalog.save(root / "catalog")
    embedder = LocalHashEmbedder(dims=32)
    index = build_index(chunk_catalog(catalog), embedder)
    save_index(index, root / "index.bin")
    provider = MockTranscriptProvider(transcripts)
    archive = run_benchmark(questions, [Mode.NO_RAG, Mode.RAG], provider, index, catalog, embedder=embedder)
    (root / "runs").mkdir()
    artifacts = score_archive(archive, catalog, PipelineConfig())
    write_score_artifacts(artifacts, root / "runs" / "run1", ["factuality", "selection"])
    (root / "sessions").mkdir()
    plan = build_blinded_session(questions, archive, "ann1", seed=77, session_id="sess1")
    plan.save(root / "sessions" / "sess1.json")
    (root / "transcripts.json").write_text(json.dumps(transcripts))
    return root


@pytest.fixture()
def client(data_dir):
    provider = MockTranscriptProvider.from_file(data_dir / "transcripts.json")
    app = create_app(data_dir, TOKENS, llm_provider=provider, embedder=LocalHashEmbedder(dims=32))
    return TestClient(app)


def fresh_client(data_dir):
    provider = MockTranscriptProvider.from_file(data_dir / "transcripts.json")
    app = create_app(data_dir, TOKENS, llm_provider=provider, embedder=LocalHashEmbedder(dims=32))
    return TestClient(app)


def test_healthz(client):
    resp = client.get("/api/healthz")
    assert resp.status_code == 200
    assert resp.json() == {"status": "ok"}


# --- ask ---------------------------------------------------------------------

def test_ask_rag_returns_hits_and_references(client, data_dir):
    questions = make_questions(5)
    body = {"question": questions[0].text, "mode": "rag", "k": 10, "question_id": questions[0].question_id}
    resp = client.post("/api/ask", json=body)
    assert resp.status_code == 200
    payload = resp.json()
    assert len(payload["hits_used"]) == 10
    assert payload["mode"] == "rag"
    assert payload["temperature"] == 0.0
    assert len(payload["parsed_references"]) == 3


def test_ask_validation(client):
    assert client.post("/api/ask", json={"question": "  "}).status_code == 400
    assert client.post("/api/ask", json={"question": "  "}).json()["code"] == "empty_question"
    resp = client.post("/api/ask", json={"question": "q", "k": 0})
    assert (resp.status_code, resp.json()["code"]) == (400, "invalid_k")
    resp = client.post("/api/ask", json={"question": "q", "mode": "hybrid"})
    assert (resp.status_code, resp.json()["code"]) == (400, "invalid_mode")


def test_ask_rag_without_index_409(tmp_path):
    app = create_app(tmp_path, TOKENS, llm_provider=MockTranscriptProvider({}))
    resp = TestClient(app).post("/api/ask", json={"question": "anything", "mode": "rag"})
    assert (resp.status_code, resp.json()["code"]) == (409, "index_missing")


def test_ask_provider_failure_is_502(client):
    resp = client.post("/api/ask", json={"question": "unscripted question", "mode": "no_rag"})
    assert resp.status_code == 502
    assert resp.json()["code"] == "transcript_missing"


# --- sessions and ratings -------------------------------------------------------

def test_next_item_auth_and_ordering(client):
    assert client.get("/api/sessions/sess1/next").status_code == 401
    assert client.get("/api/sessions/nope/next", headers=auth()).status_code == 404
    assert client.get("/api/sessions/sess1/next", headers=auth("ann2")).status_code == 403
    resp = client.get("/api/sessions/sess1/next", headers=auth())
    assert resp.status_code == 200
    payload = resp.json()
    assert payload["position"] == 1
    assert payload["total"] == 10
    assert not contains_condition_token(resp.text)


def test_rating_flow_to_completion(data_dir):
    client = fresh_client(data_dir)
    seen_positions = []
    while True:
        resp = client.get("/api/sessions/sess1/next", headers=auth())
        if resp.status_code == 204:
            break
        item = resp.json()
        assert not contains_condition_token(resp.text)
        seen_positions.append(item["position"])
        for axis in ("accuracy", "completeness", "attribution"):
            ack = client.post(
                "/api/ratings",
                json={"session_id": "sess1", "item_id": item["item_id"], "axis": axis, "score": 4},
                headers=auth(),
            )
            assert ack.status_code == 200
            assert ack.json()["accepted"]
    assert seen_positions == sorted(seen_positions)
    # durability across a process restart: a brand-new app sees completion
    assert fresh_client(data_dir).get("/api/sessions/sess1/next", headers=auth()).status_code == 204


def test_rating_validation(client):
    next_item = client.get("/api/sessions/sess1/next", headers=auth())
    item_id = next_item.json()["item_id"] if next_item.status_code == 200 else "itm000000000000"
    base = {"session_id": "sess1", "item_id": item_id, "axis": "accuracy"}
    assert client.post("/api/ratings", json={**base, "score": 0}, headers=auth()).status_code == 422
    assert client.post("/api/ratings", json={**base, "score": 6}, headers=auth()).status_code == 422
    assert client.post("/api/ratings", json={**base, "axis": "style", "score": 3}, headers=auth()).status_code == 422
    resp = client.post("/api/ratings", json={**base, "item_id": "itmmissing", "score": 3}, headers=auth())
    assert resp.status_code == 404
    assert client.post("/api/ratings", json={**base, "score": 3}).status_code == 401


def test_resubmission_flags_superseded(data_dir):
    from evrag.annotation import SessionPlan

    client = fresh_client(data_dir)
    plan = SessionPlan.load(data_dir / "sessions" / "sess1.json")
    item = plan.in_display_order()[0]
    body = {"session_id": "sess1", "item_id": item.item_id, "axis": "accuracy", "score": 2}
    first = client.post("/api/ratings", json=body, headers=auth())
    second = client.post("/api/ratings", json={**body, "score": 5}, headers=auth())
    assert second.status_code == 200
    assert second.json()["superseded"]
    assert not contains_condition_token(second.text)


# --- reports ----------------------------------------------------------------------

def test_report_bytes_identical_to_cli_artifacts(client, data_dir):
    for kind in ("factuality", "selection"):
        resp = client.get(f"/api/reports/run1/{kind}")
        assert resp.status_code == 200
        assert resp.content == (data_dir / "runs" / f"run1.{kind}.json").read_bytes()


def test_report_validation(client):
    assert client.get("/api/reports/run1/unknown").status_code == 400
    assert client.get("/api/reports/ghost/factuality").status_code == 404


def test_ui_static_mount(tmp_path, data_dir):
    ui_dir = tmp_path / "ui"
    ui_dir.mkdir()
    (ui_dir / "index.html").write_text("<!doctype html><main id=\"app\"></main>")
    app = create_app(data_dir, TOKENS, ui_dir=ui_dir)
    resp = TestClient(app).get("/ui/")
    assert resp.status_code == 200
    assert 'id="app"' in resp.text


# --- token file ----------------------------------------------------------------------

def test_load_tokens_roundtrip(tmp_path):
    path = tmp_path / "tokens.json"
    path.write_text(json.dumps(TOKENS))
    assert load_tokens(path) == TOKENS


@pytest.mark.parametrize(
    "content",
    ["не json", "{}", json.dumps({"a": ""}), json.dumps({"a": "t", "b": "t"}), json.dumps(["a"])],
)
def test_load_tokens_rejects_bad_files(tmp_path, content):
    path = tmp_path / "tokens.json"
    path.write_text(content)
    with pytest.raises(ValidationError):
        load_tokens(path)
