import json

import pytest

from evrag.catalog import chunk_catalog
from evrag.config import PipelineConfig
from evrag.embeddings import LocalHashEmbedder
from evrag.engine import (
    INSTRUCTION,
    GenerationResult,
    Mode,
    QuestionRecord,
    Topic,
    answer_question,
    build_prompt,
    load_run_archive,
    run_benchmark,
    save_run_archive,
)
from evrag.errors import TransportError, ValidationError
from evrag.index import build_index, dedupe_to_documents, retrieve_top_k
from evrag.providers import MockTranscriptProvider

from conftest import make_catalog, make_questions, make_transcripts


@pytest.fixture(scope="module")
def embedder():
    return LocalHashEmbedder(dims=32)


@pytest.fixture(scope="module")
def catalog():
    return make_catalog(n_journal=12)


@pytest.fixture(scope="module")
def index(catalog, embedder):
    return build_index(chunk_catalog(catalog), embedder)


@pytest.fixture(scope="module")
def questions():
    return make_questions(5)


@pytest.fixture(scope="module")
def provider(questions, catalog):
    return MockTranscriptProvider(make_transcripts(questions, catalog))


def doc_hits_for(question, index, embedder, k_docs=10):
    return dedupe_to_documents(retrieve_top_k(question.text, index, k=len(index), embedder=embedder), k_docs)


def test_no_rag_prompt_shape(questions):
    bundle = build_prompt(questions[0], None)
    assert bundle.mode is Mode.NO_RAG
    assert bundle.context_blocks == []
    assert bundle.render() == f"{INSTRUCTION}\n\n{questions[0].text}"


def test_rag_prompt_has_ranked_blocks(questions, catalog, index, embedder):
    hits = doc_hits_for(questions[0], index, embedder)
    bundle = build_prompt(questions[0], hits, catalog)
    assert bundle.mode is Mode.RAG
    assert [b.rank for b in bundle.context_blocks] == list(range(1, len(hits) + 1))
    assert len(bundle.context_blocks) == 10
    rendered = bundle.render()
    assert rendered.startswith(INSTRUCTION)
    assert rendered.endswith(questions[0].text)


def test_prompt_equality_across_modes(questions, catalog, index, embedder):
    hits = doc_hits_for(questions[1], index, embedder)
    with_ctx = build_prompt(questions[1], hits, catalog)
    without_ctx = build_prompt(questions[1], None)
    assert with_ctx.instruction == without_ctx.instruction
    assert with_ctx.question == without_ctx.question


def test_unknown_doc_in_hits_rejected(questions, index, embedder):
    from evrag.index import RetrievalHit

    bad = [RetrievalHit("zzz:0", "zzz", 0.5, 1)]
    with pytest.raises(ValidationError):
        build_prompt(questions[0], bad, make_catalog(n_journal=2))


def test_context_overflow_fails_loudly(questions, catalog, index, embedder):
    hits = doc_hits_for(questions[0], index, embedder)
    with pytest.raises(ValidationError) as exc:
        build_prompt(questions[0], hits, catalog, context_budget=10)
    assert exc.value.code == "context_overflow"
    assert "budget" in exc.value.message


def test_answer_question_mock_passthrough(questions, catalog, index, embedder, provider):
    config = PipelineConfig()
    q = questions[0]
    first = answer_question(q, Mode.NO_RAG, provider, None, None, config)
    second = answer_question(q, Mode.NO_RAG, provider, None, None, config)
    assert first == second
    assert first.answer_text == provider.transcripts[f"{q.question_id}/no_rag"]
    assert first.hits_used == []
    assert first.temperature == 0.0
    assert first.references_block_raw is not None
    assert first.references_block_raw.lower().startswith("references")


def test_answer_question_hits_match_direct_retrieval(questions, catalog, index, embedder, provider):
    config = PipelineConfig()
    q = questions[2]
    result = answer_question(q, Mode.RAG, provider, index, catalog, config, embedder=embedder)
    oracle = doc_hits_for(q, index, embedder, config.k_docs)
    assert len(result.hits_used) == len(oracle)
    for got, want in zip(result.hits_used, oracle):
        assert (got.snippet_id, got.doc_id, got.rank) == (want.snippet_id, want.doc_id, want.rank)
        assert got.score == pytest.approx(want.score, abs=0.0)


def test_rag_without_index_rejected(questions, provider):
    with pytest.raises(ValidationError) as exc:
        answer_question(questions[0], Mode.RAG, provider, None, None, PipelineConfig())
    assert exc.value.code == "index_missing"


def test_empty_answer_flagged(questions):
    provider = MockTranscriptProvider({f"{questions[0].question_id}/no_rag": "   "})
    result = answer_question(questions[0], Mode.NO_RAG, provider, None, None, PipelineConfig())
    assert "empty_answer" in result.flags


def test_missing_transcript_is_transport_error(questions):
    provider = MockTranscriptProvider({})
    with pytest.raises(TransportError):
        answer_question(questions[0], Mode.NO_RAG, provider, None, None, PipelineConfig())


def test_run_benchmark_counts(questions, catalog, index, embedder, provider):
    archive = run_benchmark(questions, [Mode.NO_RAG, Mode.RAG], provider, index, catalog, embedder=embedder)
    assert len(archive.results) == 10
    assert archive.failures == []
    assert all(r.temperature == 0.0 for r in archive.results)
    assert {(r.question_id, r.mode) for r in archive.results} == {
        (q.question_id, m) for q in questions for m in (Mode.NO_RAG, Mode.RAG)
    }


def test_run_benchmark_empty_questions_rejected(provider):
    with pytest.raises(ValidationError):
        run_benchmark([], [Mode.NO_RAG], provider, None, None)


def test_run_benchmark_partial_failure_ledger(questions, catalog, index, embedder):
    transcripts = make_transcripts(questions, catalog)
    del transcripts[f"{questions[3].question_id}/rag"]
    provider = MockTranscriptProvider(transcripts)
    archive = run_benchmark(questions, [Mode.NO_RAG, Mode.RAG], provider, index, catalog, embedder=embedder)
    assert len(archive.results) == 9
    assert len(archive.failures) == 1
    assert archive.failures[0]["question_id"] == questions[3].question_id
    assert archive.failures[0]["code"] == "transcript_missing"


def test_run_benchmark_parallel_matches_serial(questions, catalog, index, embedder, provider):
    serial = run_benchmark(questions, [Mode.NO_RAG, Mode.RAG], provider, index, catalog, embedder=embedder)
    parallel = run_benchmark(
        questions, [Mode.NO_RAG, Mode.RAG], provider, index, catalog, embedder=embedder, jobs=4
    )
    assert [r.to_json() for r in serial.results] == [r.to_json() for r in parallel.results]


def test_archive_rerun_byte_identical_minus_timestamp(tmp_path, questions, catalog, index, embedder, provider):
    for name in ("one", "two"):
        archive = run_benchmark(
            questions, [Mode.NO_RAG, Mode.RAG], provider, index, catalog, embedder=embedder, run_id="fixed"
        )
        save_run_archive(archive, tmp_path / name)
    assert (tmp_path / "one.results.jsonl").read_bytes() == (tmp_path / "two.results.jsonl").read_bytes()
    assert (tmp_path / "one.failures.jsonl").read_bytes() == (tmp_path / "two.failures.jsonl").read_bytes()
    m1 = json.loads((tmp_path / "one.manifest.json").read_text())
    m2 = json.loads((tmp_path / "two.manifest.json").read_text())
    m1.pop("created_at"), m2.pop("created_at")
    assert m1 == m2


def test_archive_load_roundtrip(tmp_path, questions, catalog, index, embedder, provider):
    archive = run_benchmark(questions, [Mode.NO_RAG, Mode.RAG], provider, index, catalog, embedder=embedder)
    save_run_archive(archive, tmp_path / "run")
    loaded = load_run_archive(tmp_path / "run")
    assert [r.to_json() for r in loaded.results] == [r.to_json() for r in archive.results]
    assert loaded.config == archive.config
    assert loaded.modes == archive.modes


def test_question_record_validation():
    with pytest.raises(ValidationError):
        QuestionRecord("q1", Topic.RETINA, "  ")
    record = QuestionRecord("q1", "glaucoma", "text")
    assert record.topic is Topic.GLAUCOMA


def test_generation_result_json_roundtrip(questions, catalog, index, embedder, provider):
    result = answer_question(questions[4], Mode.RAG, provider, index, catalog, PipelineConfig(), embedder=embedder)
    again = GenerationResult.from_json(json.loads(json.dumps(result.to_json())))
    assert again == result
