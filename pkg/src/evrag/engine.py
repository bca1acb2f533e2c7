"""Prompt assembly, answer generation, and benchmark-run archiving.

Prompts share a fixed instruction across both conditions; retrieval
context, when present, is interleaved between the instruction and the
question as numbered blocks. Generation runs at temperature 0 so repeated
runs with deterministic providers produce identical archives.
"""

from __future__ import annotations

import datetime as dt
import enum
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .catalog import Catalog, chunk_document
from .config import PipelineConfig
from .errors import EvragError, TransportError, ValidationError
from .index import RetrievalHit, VectorIndex, dedupe_to_documents, retrieve_top_k
from .refparse import extract_reference_block
from .tokenizers import DEFAULT_TOKENIZER, count_tokens

INSTRUCTION = (
    "Answer this question and provide references at the end of your response. "
    "The references should adhere to the AMA format."
)


class Mode(str, enum.Enum):
    RAG = "rag"
    NO_RAG = "no_rag"


class Topic(str, enum.Enum):
    RETINA = "retina"
    GLAUCOMA = "glaucoma"
    CATARACT = "cataract"
    DRY_EYE = "dry_eye"
    UVEITIS = "uveitis"


@dataclass
class QuestionRecord:
    question_id: str
    topic: Topic
    text: str

    def __post_init__(self):
        if not self.text or not self.text.strip():
            raise ValidationError("empty_question", f"question {self.question_id!r} has no text")
        if not isinstance(self.topic, Topic):
            self.topic = Topic(self.topic)

    def to_json(self) -> dict:
        return {"question_id": self.question_id, "topic": self.topic.value, "text": self.text}


def load_questions(path: str | Path) -> list[QuestionRecord]:
    questions = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                obj = json.loads(line)
                questions.append(QuestionRecord(obj["question_id"], Topic(obj["topic"]), obj["text"]))
    return questions


@dataclass
class ContextBlock:
    rank: int
    doc_id: str
    title: str
    venue: str
    year: int | None
    snippet_text: str

    def render(self) -> str:
        header = f"[{self.rank}] {self.title} — {self.venue}"
        if self.year is not None:
            header += f" ({self.year})"
        return f"{header}\n{self.snippet_text}"


@dataclass
class PromptBundle:
    instruction: str
    context_blocks: list[ContextBlock]
    question: str
    mode: Mode

    def render(self) -> str:
        parts = [self.instruction]
        parts.extend(block.render() for block in self.context_blocks)
        parts.append(self.question)
        return "\n\n".join(parts)


@dataclass
class GenerationResult:
    question_id: str
    mode: Mode
    answer_text: str
    references_block_raw: str | None
    hits_used: list[RetrievalHit]
    provider_name: str
    temperature: float
    flags: list[str] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "question_id": self.question_id,
            "mode": self.mode.value,
            "answer_text": self.answer_text,
            "references_block_raw": self.references_block_raw,
            "hits_used": [h.to_json() for h in self.hits_used],
            "provider_name": self.provider_name,
            "temperature": self.temperature,
            "flags": self.flags,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "GenerationResult":
        return cls(
            question_id=obj["question_id"],
            mode=Mode(obj["mode"]),
            answer_text=obj["answer_text"],
            references_block_raw=obj.get("references_block_raw"),
            hits_used=[RetrievalHit.from_json(h) for h in obj.get("hits_used", [])],
            provider_name=obj["provider_name"],
            temperature=float(obj["temperature"]),
            flags=list(obj.get("flags", [])),
        )


def _snippet_text_for_hit(hit: RetrievalHit, catalog: Catalog, config: PipelineConfig) -> str:
    # Snippets are not stored in the index; rechunking the parent document
    # is deterministic so the hit's snippet_id resolves to the same text.
    doc = catalog.get(hit.doc_id)
    for snippet in chunk_document(doc, max_tokens=config.max_snippet_tokens):
        if snippet.snippet_id == hit.snippet_id:
            return snippet.text
    raise ValidationError(
        "snippet_not_found",
        f"snippet {hit.snippet_id!r} not reproducible from {hit.doc_id!r}; check max_snippet_tokens",
    )


def build_prompt(
    question: QuestionRecord,
    hits: list[RetrievalHit] | None,
    catalog: Catalog | None = None,
    config: PipelineConfig | None = None,
    context_budget: int | None = None,
) -> PromptBundle:
    """Assemble the prompt for one question, with or without retrieval context.

    The instruction and question segments are byte-identical across modes;
    only the numbered context blocks differ. The rendered prompt is checked
    against the provider context budget and overflow fails loudly rather
    than silently truncating.
    """
    config = config or PipelineConfig()
    if hits is None:
        bundle = PromptBundle(INSTRUCTION, [], question.text, Mode.NO_RAG)
    else:
        if not hits:
            raise ValidationError("no_hits", "rag mode requires at least one retrieval hit")
        if catalog is None:
            raise ValidationError("missing_catalog", "rag mode requires the document catalog")
        blocks = []
        for hit in hits:
            doc = catalog.get(hit.doc_id)
            blocks.append(
                ContextBlock(
                    rank=hit.rank,
                    doc_id=doc.doc_id,
                    title=doc.title,
                    venue=doc.venue,
                    year=doc.year,
                    snippet_text=_snippet_text_for_hit(hit, catalog, config),
                )
            )
        bundle = PromptBundle(INSTRUCTION, blocks, question.text, Mode.RAG)
    if context_budget is not None:
        size = count_tokens(bundle.render(), DEFAULT_TOKENIZER)
        if size > context_budget:
            raise ValidationError("context_overflow", f"prompt is {size} tokens, budget is {context_budget}")
    return bundle


def answer_question(
    question: QuestionRecord,
    mode: Mode,
    llm_provider,
    index: VectorIndex | None,
    catalog: Catalog | None,
    config: PipelineConfig,
    embedder=None,
) -> GenerationResult:
    """Generate one answer, archiving the exact document hits injected."""
    if mode is Mode.RAG:
        if index is None:
            raise ValidationError("index_missing", "rag mode requires a vector index")
        snippet_hits = retrieve_top_k(question.text, index, k=len(index), embedder=embedder)
        doc_hits = dedupe_to_documents(snippet_hits, config.k_docs)
    else:
        doc_hits = []
    bundle = build_prompt(
        question,
        doc_hits if mode is Mode.RAG else None,
        catalog,
        config,
        context_budget=llm_provider.context_budget,
    )
    answer = llm_provider.complete(
        bundle.render(),
        temperature=config.temperature,
        tag=f"{question.question_id}/{mode.value}",
    )
    flags = []
    if not answer or not answer.strip():
        flags.append("empty_answer")
        answer = answer or ""
    block = extract_reference_block(answer)
    return GenerationResult(
        question_id=question.question_id,
        mode=mode,
        answer_text=answer,
        references_block_raw=block.block_text if block.found else None,
        hits_used=doc_hits,
        provider_name=llm_provider.name,
        temperature=config.temperature,
        flags=flags,
    )


@dataclass
class RunArchive:
    run_id: str
    created_at: str
    config: PipelineConfig
    provider_name: str
    modes: list[Mode]
    results: list[GenerationResult]
    failures: list[dict]

    def manifest(self) -> dict:
        return {
            "run_id": self.run_id,
            "created_at": self.created_at,
            "config": self.config.to_json(),
            "provider_name": self.provider_name,
            "modes": [m.value for m in self.modes],
            "result_count": len(self.results),
            "failure_count": len(self.failures),
        }

    def results_for_mode(self, mode: Mode) -> list[GenerationResult]:
        return [r for r in self.results if r.mode is mode]


def run_benchmark(
    questions,
    modes: list[Mode],
    llm_provider,
    index: VectorIndex | None,
    catalog: Catalog | None,
    config: PipelineConfig | None = None,
    embedder=None,
    run_id: str = "run",
    jobs: int = 1,
) -> RunArchive:
    """Answer every (question, mode) pair, recording per-item failures.

    Items may be processed concurrently, but results are emitted in
    deterministic question-major order regardless of completion order.
    Per-item provider failures go to the failure ledger; the run completes.
    """
    if not questions:
        raise ValidationError("no_questions", "cannot run a benchmark on zero questions")
    if not modes:
        raise ValidationError("no_modes", "at least one generation mode is required")
    config = config or PipelineConfig()
    tasks = [(q, mode) for q in questions for mode in modes]

    def one(task):
        q, mode = task
        try:
            return answer_question(q, mode, llm_provider, index, catalog, config, embedder=embedder), None
        except EvragError as exc:
            return None, {
                "question_id": q.question_id,
                "mode": mode.value,
                "code": exc.code,
                "message": exc.message,
            }

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(one, tasks))
    else:
        outcomes = [one(t) for t in tasks]

    results = [r for r, _ in outcomes if r is not None]
    failures = [f for _, f in outcomes if f is not None]
    return RunArchive(
        run_id=run_id,
        created_at=dt.datetime.now(dt.timezone.utc).isoformat(),
        config=config,
        provider_name=llm_provider.name,
        modes=list(modes),
        results=results,
        failures=failures,
    )


def save_run_archive(archive: RunArchive, base: str | Path) -> None:
    """Write {base}.manifest.json, {base}.results.jsonl, {base}.failures.jsonl."""
    base = Path(base)
    base.parent.mkdir(parents=True, exist_ok=True)
    with open(f"{base}.manifest.json", "w", encoding="utf-8") as fh:
        json.dump(archive.manifest(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(f"{base}.results.jsonl", "w", encoding="utf-8") as fh:
        for result in archive.results:
            fh.write(json.dumps(result.to_json(), sort_keys=True, ensure_ascii=False) + "\n")
    with open(f"{base}.failures.jsonl", "w", encoding="utf-8") as fh:
        for failure in archive.failures:
            fh.write(json.dumps(failure, sort_keys=True, ensure_ascii=False) + "\n")


def load_run_archive(base: str | Path) -> RunArchive:
    base = Path(base)
    manifest_path = Path(f"{base}.manifest.json")
    if not manifest_path.exists():
        raise ValidationError("archive_missing", f"no run manifest at {manifest_path}")
    with open(manifest_path, encoding="utf-8") as fh:
        manifest = json.load(fh)
    results = []
    with open(f"{base}.results.jsonl", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                results.append(GenerationResult.from_json(json.loads(line)))
    failures = []
    failures_path = Path(f"{base}.failures.jsonl")
    if failures_path.exists():
        with open(failures_path, encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    failures.append(json.loads(line))
    return RunArchive(
        run_id=manifest["run_id"],
        created_at=manifest["created_at"],
        config=PipelineConfig.from_mapping(manifest["config"]),
        provider_name=manifest["provider_name"],
        modes=[Mode(m) for m in manifest["modes"]],
        results=results,
        failures=failures,
    )
