"""Exhaustive flat vector index with exact cosine top-k retrieval.

No approximate-nearest-neighbor structure: at the corpus scale this
pipeline targets (tens of thousands of snippets) a full scan is
milliseconds, and exactness makes the ranking verifiable against a
brute-force oracle.

Index file layout (all integers little-endian):

    magic             7 bytes  b"EVRIDX1"
    provider_kind     uint8    0 = remote_api, 1 = deterministic_local
    model_name        uint32 length + UTF-8 bytes
    dims              uint32
    count             uint32
    then, per record:
    snippet_id        uint32 length + UTF-8 bytes
    doc_id            uint32 length + UTF-8 bytes
    values            dims x float32
    norm              float32

Vectors are quantized to float32 at build time; the stored norm is the
float64 Euclidean norm of the quantized values, rounded to float32.
Builds are single-writer; a finished index is immutable and safe for
concurrent queries.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .catalog import Snippet
from .embeddings import EmbeddingProviderSpec, ProviderKind, make_embedder
from .errors import ValidationError

MAGIC = b"EVRIDX1"

_KIND_TO_BYTE = {ProviderKind.REMOTE_API: 0, ProviderKind.DETERMINISTIC_LOCAL: 1}
_BYTE_TO_KIND = {v: k for k, v in _KIND_TO_BYTE.items()}


@dataclass
class RetrievalHit:
    snippet_id: str
    doc_id: str
    score: float
    rank: int

    def to_json(self) -> dict:
        return {"snippet_id": self.snippet_id, "doc_id": self.doc_id, "score": self.score, "rank": self.rank}

    @classmethod
    def from_json(cls, obj: dict) -> "RetrievalHit":
        return cls(obj["snippet_id"], obj["doc_id"], float(obj["score"]), int(obj["rank"]))


class VectorIndex:
    """Snippet-id/doc-id rows plus a float32 vector matrix."""

    def __init__(self, provider_spec: EmbeddingProviderSpec):
        self.provider_spec = provider_spec
        self.snippet_ids: list[str] = []
        self.doc_ids: list[str] = []
        self._vectors: list[np.ndarray] = []
        self.norms: list[float] = []

    def __len__(self) -> int:
        return len(self.snippet_ids)

    @property
    def vectors(self) -> np.ndarray:
        if not self._vectors:
            return np.zeros((0, self.provider_spec.dims), dtype=np.float32)
        return np.stack(self._vectors)

    def add(self, snippet_id: str, doc_id: str, values: np.ndarray) -> None:
        v32 = np.asarray(values, dtype=np.float32)
        if v32.shape != (self.provider_spec.dims,):
            raise ValidationError("dims_mismatch", f"vector shape {v32.shape} != ({self.provider_spec.dims},)")
        norm = np.float32(np.linalg.norm(v32.astype(np.float64)))
        if norm == 0.0:
            raise ValidationError("zero_norm", f"snippet {snippet_id!r} embeds to a zero vector")
        self.snippet_ids.append(snippet_id)
        self.doc_ids.append(doc_id)
        self._vectors.append(v32)
        self.norms.append(float(norm))


def build_index(snippets: list[Snippet], embedder) -> VectorIndex:
    """Embed snippets in order and assemble an index.

    Embedding calls may in principle be concurrent, but rows are committed
    in snippet order so rebuilds are byte-identical for deterministic
    providers.
    """
    if not snippets:
        raise ValidationError("empty_snippets", "cannot build an index from zero snippets")
    index = VectorIndex(embedder.spec)
    for snippet in snippets:
        vector = embedder.embed(snippet.text)
        index.add(snippet.snippet_id, snippet.doc_id, vector.values)
    return index


def save_index(index: VectorIndex, path: str | Path) -> None:
    spec = index.provider_spec
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<B", _KIND_TO_BYTE[spec.provider_kind]))
        name = spec.model_name.encode("utf-8")
        fh.write(struct.pack("<I", len(name)))
        fh.write(name)
        fh.write(struct.pack("<II", spec.dims, len(index)))
        for sid, did, vec, norm in zip(index.snippet_ids, index.doc_ids, index._vectors, index.norms):
            sid_b, did_b = sid.encode("utf-8"), did.encode("utf-8")
            fh.write(struct.pack("<I", len(sid_b)))
            fh.write(sid_b)
            fh.write(struct.pack("<I", len(did_b)))
            fh.write(did_b)
            fh.write(vec.astype("<f4").tobytes())
            fh.write(struct.pack("<f", norm))


def load_index(path: str | Path) -> VectorIndex:
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise ValidationError("bad_index_magic", f"{path} is not an index file")
        (kind_byte,) = struct.unpack("<B", fh.read(1))
        (name_len,) = struct.unpack("<I", fh.read(4))
        model_name = fh.read(name_len).decode("utf-8")
        dims, count = struct.unpack("<II", fh.read(8))
        spec = EmbeddingProviderSpec(_BYTE_TO_KIND[kind_byte], model_name, dims)
        index = VectorIndex(spec)
        for _ in range(count):
            (sid_len,) = struct.unpack("<I", fh.read(4))
            sid = fh.read(sid_len).decode("utf-8")
            (did_len,) = struct.unpack("<I", fh.read(4))
            did = fh.read(did_len).decode("utf-8")
            vec = np.frombuffer(fh.read(4 * dims), dtype="<f4").copy()
            (norm,) = struct.unpack("<f", fh.read(4))
            index.snippet_ids.append(sid)
            index.doc_ids.append(did)
            index._vectors.append(vec)
            index.norms.append(norm)
    return index


def ensure_provider_match(index: VectorIndex, spec: EmbeddingProviderSpec) -> None:
    existing = index.provider_spec
    if (existing.provider_kind, existing.model_name, existing.dims) != (
        spec.provider_kind,
        spec.model_name,
        spec.dims,
    ):
        raise ValidationError(
            "provider_mismatch",
            f"index built with {existing.to_json()}, requested {spec.to_json()}",
        )


def retrieve_top_k(query: str, index: VectorIndex, k: int = 10, embedder=None) -> list[RetrievalHit]:
    """Exact snippet-level top-k by cosine similarity.

    Scores are sorted descending; exact ties break by ascending snippet_id
    so rankings are reproducible. If k exceeds the index size, every entry
    is returned.
    """
    if k < 1:
        raise ValidationError("invalid_k", "k must be >= 1")
    if len(index) == 0:
        raise ValidationError("empty_index", "cannot query an empty index")
    if not query or not query.strip():
        raise ValidationError("empty_query", "cannot retrieve for an empty query")
    if embedder is None:
        embedder = make_embedder(index.provider_spec)
    qvec = embedder.embed(query)
    if qvec.dims != index.provider_spec.dims:
        raise ValidationError("dims_mismatch", f"query dims {qvec.dims} != index dims {index.provider_spec.dims}")
    matrix = index.vectors.astype(np.float64)
    # row-wise dot products, not one matmul: BLAS gemv accumulates in a
    # different order than per-row dot and can flip exact ties by one ulp,
    # which would break reproducible rankings
    scores = [
        min(1.0, max(-1.0, float(np.dot(row, qvec.values)) / (float(np.linalg.norm(row)) * qvec.norm)))
        for row in matrix
    ]
    order = sorted(range(len(index)), key=lambda i: (-scores[i], index.snippet_ids[i]))[: min(k, len(index))]
    return [
        RetrievalHit(index.snippet_ids[i], index.doc_ids[i], float(scores[i]), rank)
        for rank, i in enumerate(order, start=1)
    ]


def dedupe_to_documents(hits: list[RetrievalHit], k_docs: int = 10) -> list[RetrievalHit]:
    """Collapse snippet hits to one hit per document, keeping the best
    snippet's score and id, re-ranked 1..k_docs."""
    seen: set[str] = set()
    out: list[RetrievalHit] = []
    for hit in hits:
        if hit.doc_id in seen:
            continue
        seen.add(hit.doc_id)
        out.append(RetrievalHit(hit.snippet_id, hit.doc_id, hit.score, rank=len(out) + 1))
        if len(out) == k_docs:
            break
    return out
