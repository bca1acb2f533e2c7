"""Corpus ingestion: heterogeneous sources into a validated document catalog.

Three source kinds are supported: journal abstracts (metadata-QC'd),
practice-pattern guideline pages (one document per page), and wiki
articles (one document per page, deduplicated by title). Documents are
chunked into token-bounded snippets for indexing.

Ingestion is deterministic: identical inputs produce identical document
ids, ordering, and manifest counts, so re-ingestion is idempotent.
"""

from __future__ import annotations

import datetime as dt
import enum
import hashlib
import json
import logging
import unicodedata
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ValidationError
from .tokenizers import DEFAULT_TOKENIZER, Tokenizer, count_tokens

log = logging.getLogger(__name__)

MIN_VALID_YEAR = 1800
DEFAULT_MAX_SNIPPET_TOKENS = 1024


class SourceKind(str, enum.Enum):
    JOURNAL_ABSTRACT = "journal_abstract"
    PRACTICE_PATTERN_PAGE = "practice_pattern_page"
    WIKI_ARTICLE = "wiki_article"


_ID_PREFIX = {
    SourceKind.JOURNAL_ABSTRACT: "ja",
    SourceKind.PRACTICE_PATTERN_PAGE: "pp",
    SourceKind.WIKI_ARTICLE: "wk",
}


@dataclass
class Document:
    doc_id: str
    source_kind: SourceKind
    title: str
    authors: list[str]
    venue: str
    body: str
    year: int | None = None
    doi: str | None = None
    url: str | None = None

    def to_json(self) -> dict:
        return {
            "doc_id": self.doc_id,
            "source_kind": self.source_kind.value,
            "title": self.title,
            "authors": self.authors,
            "venue": self.venue,
            "year": self.year,
            "doi": self.doi,
            "url": self.url,
            "body": self.body,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Document":
        return cls(
            doc_id=obj["doc_id"],
            source_kind=SourceKind(obj["source_kind"]),
            title=obj["title"],
            authors=list(obj.get("authors") or []),
            venue=obj["venue"],
            year=obj.get("year"),
            doi=obj.get("doi"),
            url=obj.get("url"),
            body=obj["body"],
        )


@dataclass
class Snippet:
    snippet_id: str
    doc_id: str
    ordinal: int
    text: str
    token_count: int


@dataclass
class Rejection:
    """One rejected input record; never aborts the surrounding ingest."""

    source_kind: SourceKind
    reason: str
    detail: str = ""

    def to_json(self) -> dict:
        return {"source_kind": self.source_kind.value, "reason": self.reason, "detail": self.detail}


@dataclass
class CatalogManifest:
    counts: dict[str, int]
    rejected_count: int
    ingest_timestamp: str

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def to_json(self) -> dict:
        return {
            "counts": self.counts,
            "rejected_count": self.rejected_count,
            "ingest_timestamp": self.ingest_timestamp,
        }


@dataclass
class Catalog:
    """Immutable-after-ingest document collection, safe for concurrent reads."""

    documents: list[Document] = field(default_factory=list)
    rejections: list[Rejection] = field(default_factory=list)

    def __post_init__(self):
        self._by_id = {d.doc_id: d for d in self.documents}
        if len(self._by_id) != len(self.documents):
            raise ValidationError("duplicate_doc_id", "doc_id values must be unique within a catalog")

    def __len__(self) -> int:
        return len(self.documents)

    def __contains__(self, doc_id: str) -> bool:
        return doc_id in self._by_id

    def get(self, doc_id: str) -> Document:
        try:
            return self._by_id[doc_id]
        except KeyError:
            raise ValidationError("unknown_doc_id", f"no document {doc_id!r} in catalog")

    def manifest(self, timestamp: str | None = None) -> CatalogManifest:
        counts = {kind.value: 0 for kind in SourceKind}
        for doc in self.documents:
            counts[doc.source_kind.value] += 1
        stamp = timestamp or dt.datetime.now(dt.timezone.utc).isoformat()
        return CatalogManifest(counts=counts, rejected_count=len(self.rejections), ingest_timestamp=stamp)

    def extend(self, documents: list[Document], rejections: list[Rejection]) -> None:
        for doc in documents:
            if doc.doc_id in self._by_id:
                raise ValidationError("duplicate_doc_id", f"doc_id {doc.doc_id!r} already in catalog")
            self._by_id[doc.doc_id] = doc
            self.documents.append(doc)
        self.rejections.extend(rejections)

    def save(self, out_dir: str | Path) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "catalog.jsonl", "w", encoding="utf-8") as fh:
            for doc in self.documents:
                fh.write(json.dumps(doc.to_json(), sort_keys=True, ensure_ascii=False) + "\n")
        with open(out / "rejections.jsonl", "w", encoding="utf-8") as fh:
            for rej in self.rejections:
                fh.write(json.dumps(rej.to_json(), sort_keys=True, ensure_ascii=False) + "\n")
        with open(out / "manifest.json", "w", encoding="utf-8") as fh:
            json.dump(self.manifest().to_json(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, in_dir: str | Path) -> "Catalog":
        root = Path(in_dir)
        catalog_path = root / "catalog.jsonl"
        if not catalog_path.exists():
            raise ValidationError("catalog_missing", f"no catalog.jsonl under {root}")
        documents = []
        with open(catalog_path, encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    documents.append(Document.from_json(json.loads(line)))
        rejections = []
        rej_path = root / "rejections.jsonl"
        if rej_path.exists():
            with open(rej_path, encoding="utf-8") as fh:
                for line in fh:
                    if line.strip():
                        obj = json.loads(line)
                        rejections.append(
                            Rejection(SourceKind(obj["source_kind"]), obj["reason"], obj.get("detail", ""))
                        )
        return cls(documents=documents, rejections=rejections)


def normalize_body(text: str) -> str:
    """Collapse whitespace runs to single spaces and strip control characters.

    Keeps the chunk/reassemble round trip well-defined: the normalized body
    is exactly the single-space join of its tokens.
    """
    cleaned = "".join(c for c in text if c.isspace() or unicodedata.category(c) != "Cc")
    return " ".join(cleaned.split())


def make_doc_id(kind: SourceKind, venue: str, title: str, year: int | None, ordinal: int = 0) -> str:
    """Deterministic id: source-kind prefix plus a stable content hash."""
    key = f"{venue}\x1f{title}\x1f{year if year is not None else ''}\x1f{ordinal}"
    digest = hashlib.sha256(key.encode("utf-8")).hexdigest()[:16]
    return f"{_ID_PREFIX[kind]}-{digest}"


def _blank(value) -> bool:
    return value is None or (isinstance(value, str) and not value.strip())


def _coerce_year(value) -> int | None:
    """Best-effort year parse; None when absent or non-numeric."""
    if value is None:
        return None
    if isinstance(value, int):
        return value
    text = str(value).strip()
    if not text:
        return None
    try:
        return int(text)
    except ValueError:
        return None


def ingest_journal_abstracts(records: list[dict]) -> tuple[list[Document], list[Rejection]]:
    """Validate raw abstract records and emit one document per valid record.

    Per-record defects (missing title/venue/year, year outside the sanity
    window, empty abstract body) land in the rejection log with a reason
    code; they never abort the batch.
    """
    current_year = dt.date.today().year
    documents: list[Document] = []
    rejections: list[Rejection] = []
    for record in records:
        title = record.get("title")
        venue = record.get("venue", record.get("journal"))
        body = record.get("body", record.get("abstract"))
        if _blank(title):
            rejections.append(Rejection(SourceKind.JOURNAL_ABSTRACT, "missing_title", _describe(record)))
            continue
        if _blank(venue):
            rejections.append(Rejection(SourceKind.JOURNAL_ABSTRACT, "missing_venue", _describe(record)))
            continue
        raw_year = record.get("year")
        if _blank(raw_year):
            rejections.append(Rejection(SourceKind.JOURNAL_ABSTRACT, "missing_year", _describe(record)))
            continue
        year = _coerce_year(raw_year)
        if year is None or not (MIN_VALID_YEAR <= year <= current_year + 1):
            rejections.append(Rejection(SourceKind.JOURNAL_ABSTRACT, "invalid_year", _describe(record)))
            continue
        if _blank(body):
            rejections.append(Rejection(SourceKind.JOURNAL_ABSTRACT, "missing_body", _describe(record)))
            continue
        documents.append(
            Document(
                doc_id=make_doc_id(SourceKind.JOURNAL_ABSTRACT, str(venue).strip(), str(title).strip(), year),
                source_kind=SourceKind.JOURNAL_ABSTRACT,
                title=str(title).strip(),
                authors=[str(a) for a in record.get("authors") or []],
                venue=str(venue).strip(),
                year=year,
                doi=record.get("doi") or None,
                url=record.get("url") or None,
                body=str(body),
            )
        )
    return documents, rejections


def _describe(record: dict) -> str:
    title = record.get("title") or "<untitled>"
    return str(title)[:120]


def ingest_guideline_pages(
    guideline_title: str, pages: list[str]
) -> tuple[list[Document], list[Rejection]]:
    """One document per non-empty guideline page; page numbers are 1-based.

    Empty pages are skipped and logged. A guideline whose pages are all
    empty is an error rather than a silent no-op.
    """
    if all(_blank(p) for p in pages):
        raise ValidationError("empty_guideline", f"all pages of {guideline_title!r} are empty")
    documents: list[Document] = []
    rejections: list[Rejection] = []
    for page_no, page in enumerate(pages, start=1):
        if _blank(page):
            log.info("skipping empty page %d of guideline %r", page_no, guideline_title)
            rejections.append(
                Rejection(SourceKind.PRACTICE_PATTERN_PAGE, "empty_page", f"{guideline_title} p.{page_no}")
            )
            continue
        title = f"{guideline_title}, page {page_no}"
        documents.append(
            Document(
                doc_id=make_doc_id(SourceKind.PRACTICE_PATTERN_PAGE, guideline_title, title, None, page_no),
                source_kind=SourceKind.PRACTICE_PATTERN_PAGE,
                title=title,
                authors=[],
                venue=guideline_title,
                body=page,
            )
        )
    return documents, rejections


def ingest_wiki_articles(pages: list[dict]) -> tuple[list[Document], list[Rejection]]:
    """One document per wiki page; duplicate titles keep the longest body."""
    best: dict[str, dict] = {}
    order: list[str] = []
    rejections: list[Rejection] = []
    for page in pages:
        title = page.get("title")
        body = page.get("body")
        if _blank(title):
            rejections.append(Rejection(SourceKind.WIKI_ARTICLE, "missing_title", _describe(page)))
            continue
        if _blank(body):
            rejections.append(Rejection(SourceKind.WIKI_ARTICLE, "empty_body", _describe(page)))
            continue
        key = str(title).strip()
        if key not in best:
            best[key] = page
            order.append(key)
        else:
            kept = best[key] if len(str(best[key]["body"])) >= len(str(body)) else page
            dropped = page if kept is best[key] else best[key]
            log.info("duplicate wiki title %r: dropping shorter body (%d chars)", key, len(str(dropped["body"])))
            rejections.append(Rejection(SourceKind.WIKI_ARTICLE, "duplicate_title", key))
            best[key] = kept
    documents = []
    for key in order:
        page = best[key]
        documents.append(
            Document(
                doc_id=make_doc_id(SourceKind.WIKI_ARTICLE, "EyeWiki", key, None),
                source_kind=SourceKind.WIKI_ARTICLE,
                title=key,
                authors=[],
                venue="EyeWiki",
                url=page.get("url") or None,
                body=str(page["body"]),
            )
        )
    return documents, rejections


def chunk_document(
    doc: Document,
    max_tokens: int = DEFAULT_MAX_SNIPPET_TOKENS,
    tokenizer: Tokenizer = DEFAULT_TOKENIZER,
) -> list[Snippet]:
    """Split a document body into non-overlapping snippets of at most
    ``max_tokens`` tokens, cutting only on token boundaries.

    The body is normalized first, so detokenizing the snippets in ordinal
    order reproduces the normalized body exactly.
    """
    if max_tokens < 1:
        raise ValidationError("invalid_max_tokens", "max_tokens must be >= 1")
    body = normalize_body(doc.body)
    if not body:
        raise ValidationError("empty_body", f"document {doc.doc_id} has an empty body")
    units = tokenizer.tokenize(body)
    snippets: list[Snippet] = []
    chunk: list[str] = []
    chunk_cost = 0

    def flush():
        nonlocal chunk, chunk_cost
        ordinal = len(snippets)
        snippets.append(
            Snippet(
                snippet_id=f"{doc.doc_id}:{ordinal}",
                doc_id=doc.doc_id,
                ordinal=ordinal,
                text=tokenizer.detokenize(chunk),
                token_count=chunk_cost,
            )
        )
        chunk, chunk_cost = [], 0

    for unit in units:
        cost = tokenizer.cost(unit)
        if cost > max_tokens:
            raise ValidationError("unsplittable_token", f"token of cost {cost} exceeds budget {max_tokens}")
        if chunk and chunk_cost + cost > max_tokens:
            flush()
        chunk.append(unit)
        chunk_cost += cost
    if chunk:
        flush()
    return snippets


def reassemble_snippets(snippets: list[Snippet], tokenizer: Tokenizer = DEFAULT_TOKENIZER) -> str:
    """Inverse of chunking: join snippet texts back into the normalized body."""
    ordered = sorted(snippets, key=lambda s: s.ordinal)
    return tokenizer.detokenize([s.text for s in ordered])


def chunk_catalog(
    catalog: Catalog,
    max_tokens: int = DEFAULT_MAX_SNIPPET_TOKENS,
    tokenizer: Tokenizer = DEFAULT_TOKENIZER,
) -> list[Snippet]:
    snippets: list[Snippet] = []
    for doc in catalog.documents:
        snippets.extend(chunk_document(doc, max_tokens=max_tokens, tokenizer=tokenizer))
    return snippets


__all__ = [
    "Catalog",
    "CatalogManifest",
    "Document",
    "Rejection",
    "Snippet",
    "SourceKind",
    "chunk_catalog",
    "chunk_document",
    "count_tokens",
    "ingest_guideline_pages",
    "ingest_journal_abstracts",
    "ingest_wiki_articles",
    "make_doc_id",
    "normalize_body",
    "reassemble_snippets",
]
