"""HTTP facade: question answering, blinded annotation sessions, reports.

The service owns no write path except rating submission; benchmark runs
and report files are produced by the CLI and served read-only here, so
every report fetched over HTTP is byte-identical to the CLI emission.
Blinding is enforced at the wire: rater-facing payloads never carry the
condition.
"""

from __future__ import annotations

import hashlib
import json
import threading
from pathlib import Path

from fastapi import FastAPI, Request, Response
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from .annotation import Axis, Rating, RatingStore, SessionPlan, record_rating
from .catalog import Catalog
from .config import PipelineConfig
from .engine import Mode, QuestionRecord, Topic, answer_question
from .errors import EvragError, TransportError, ValidationError
from .index import load_index
from .refparse import extract_reference_block

REPORT_KINDS = ("factuality", "selection", "ratings")


def load_tokens(path) -> dict[str, str]:
    """Annotator -> bearer token map from a JSON config file."""
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError("bad_token_file", f"cannot read token file {path}: {exc}")
    if not isinstance(raw, dict) or not raw:
        raise ValidationError("bad_token_file", "token file must be a non-empty JSON object")
    tokens = {}
    for annotator, token in raw.items():
        if not isinstance(token, str) or not token.strip():
            raise ValidationError("bad_token_file", f"empty token for annotator {annotator!r}")
        tokens[str(annotator)] = token
    if len(set(tokens.values())) != len(tokens):
        raise ValidationError("bad_token_file", "tokens must be unique per annotator")
    return tokens


def _api_error(status: int, code: str, message: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"status": status, "code": code, "message": message})


class ServiceState:
    """Mutable bits behind the endpoints; everything else is request-scoped."""

    def __init__(self, data_dir: Path, tokens: dict[str, str], llm_provider=None, config=None, embedder=None):
        self.data_dir = data_dir
        self.tokens_by_value = {token: annotator for annotator, token in tokens.items()}
        self.llm_provider = llm_provider
        self.config = config or PipelineConfig()
        self.embedder = embedder
        self.catalog = None
        self.index = None
        catalog_dir = data_dir / "catalog"
        if (catalog_dir / "catalog.jsonl").exists():
            self.catalog = Catalog.load(catalog_dir)
        index_path = data_dir / "index.bin"
        if index_path.exists():
            self.index = load_index(index_path)
        self.plans: dict[str, SessionPlan] = {}
        sessions_dir = data_dir / "sessions"
        if sessions_dir.is_dir():
            for plan_path in sorted(sessions_dir.glob("*.json")):
                plan = SessionPlan.load(plan_path)
                self.plans[plan.session_id] = plan
        self.ratings = RatingStore(data_dir / "ratings.jsonl")
        self._session_locks: dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()

    def session_lock(self, session_id: str) -> threading.Lock:
        with self._locks_guard:
            return self._session_locks.setdefault(session_id, threading.Lock())

    def annotator_for(self, request: Request) -> str | None:
        header = request.headers.get("authorization", "")
        if not header.lower().startswith("bearer "):
            return None
        return self.tokens_by_value.get(header[7:].strip())

    def unrated_items(self, plan: SessionPlan) -> list:
        latest = self.ratings.latest()
        pending = []
        for item in plan.in_display_order():
            have = {
                axis for axis in Axis if (plan.annotator_id, item.item_id, axis.value) in latest
            }
            if len(have) < len(Axis):
                pending.append(item)
        return pending


def create_app(
    data_dir,
    tokens: dict[str, str],
    llm_provider=None,
    config: PipelineConfig | None = None,
    embedder=None,
    ui_dir=None,
) -> FastAPI:
    state = ServiceState(Path(data_dir), tokens, llm_provider=llm_provider, config=config, embedder=embedder)
    app = FastAPI(title="evrag service")
    app.state.evrag = state

    @app.exception_handler(EvragError)
    async def evrag_error_handler(request: Request, exc: EvragError):
        status = 502 if isinstance(exc, TransportError) else 400
        return _api_error(status, exc.code, exc.message)

    @app.get("/api/healthz")
    def healthz():
        return {"status": "ok"}

    @app.post("/api/ask")
    def ask(body: dict):
        question_text = (body.get("question") or "").strip()
        if not question_text:
            return _api_error(400, "empty_question", "question text is required")
        mode_raw = body.get("mode", "rag")
        try:
            mode = Mode(mode_raw)
        except ValueError:
            return _api_error(400, "invalid_mode", f"mode must be one of {[m.value for m in Mode]}")
        k = body.get("k", state.config.k_docs)
        if not isinstance(k, int) or isinstance(k, bool) or k < 1:
            return _api_error(400, "invalid_k", "k must be a positive integer")
        if state.llm_provider is None:
            return _api_error(409, "provider_missing", "no LLM provider configured")
        if mode is Mode.RAG and state.index is None:
            return _api_error(409, "index_missing", "no vector index available for rag mode")
        question_id = body.get("question_id") or "adhoc-" + hashlib.sha256(question_text.encode()).hexdigest()[:10]
        question = QuestionRecord(question_id, Topic.RETINA, question_text)
        cfg = PipelineConfig.from_mapping({**state.config.to_json(), "k_docs": k})
        try:
            result = answer_question(
                question, mode, state.llm_provider, state.index, state.catalog, cfg, embedder=state.embedder
            )
        except TransportError as exc:
            return _api_error(502, exc.code, exc.message)
        block = extract_reference_block(result.answer_text)
        view = result.to_json()
        view["parsed_references"] = [entry.to_json() for entry in block.entries]
        return view

    @app.get("/api/sessions/{session_id}/next")
    def next_item(session_id: str, request: Request):
        annotator = state.annotator_for(request)
        if annotator is None:
            return _api_error(401, "unauthenticated", "missing or unknown bearer token")
        plan = state.plans.get(session_id)
        if plan is None:
            return _api_error(404, "unknown_session", f"no session {session_id!r}")
        if plan.annotator_id != annotator:
            return _api_error(403, "foreign_session", "session belongs to another annotator")
        pending = state.unrated_items(plan)
        if not pending:
            return Response(status_code=204)
        item = pending[0]
        payload = item.to_rater_json(total=len(plan.items))
        payload["remaining"] = len(pending)
        return payload

    @app.post("/api/ratings")
    def submit_rating(body: dict, request: Request):
        annotator = state.annotator_for(request)
        if annotator is None:
            return _api_error(401, "unauthenticated", "missing or unknown bearer token")
        session_id = body.get("session_id", "")
        plan = state.plans.get(session_id)
        if plan is None:
            return _api_error(404, "unknown_session", f"no session {session_id!r}")
        if plan.annotator_id != annotator:
            return _api_error(403, "foreign_session", "session belongs to another annotator")
        try:
            axis = Axis(body.get("axis", ""))
        except ValueError:
            return _api_error(422, "invalid_axis", f"axis must be one of {[a.value for a in Axis]}")
        score = body.get("score")
        if not isinstance(score, int) or isinstance(score, bool) or not (1 <= score <= 5):
            return _api_error(422, "score_out_of_range", "score must be an integer between 1 and 5")
        rating = Rating(annotator_id=annotator, item_id=str(body.get("item_id", "")), axis=axis, score=score)
        try:
            with state.session_lock(session_id):
                ack = record_rating(rating, plan, state.ratings)
        except ValidationError as exc:
            if exc.code == "unknown_item":
                return _api_error(404, exc.code, exc.message)
            return _api_error(422, exc.code, exc.message)
        ack["remaining"] = len(state.unrated_items(plan))
        return ack

    @app.get("/api/reports/{run_id}/{kind}")
    def report(run_id: str, kind: str):
        if kind not in REPORT_KINDS:
            return _api_error(400, "invalid_kind", f"kind must be one of {REPORT_KINDS}")
        path = state.data_dir / "runs" / f"{run_id}.{kind}.json"
        if not path.exists():
            return _api_error(404, "unknown_run", f"no {kind} report for run {run_id!r}")
        return Response(content=path.read_bytes(), media_type="application/json")

    if ui_dir is not None and Path(ui_dir).is_dir():
        app.mount("/ui", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app
