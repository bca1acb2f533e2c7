"""Embedding providers and vector primitives for dense retrieval.

Two providers are available: a remote HTTP API (configured with a base
URL and model name, authenticated via environment variable) and a fully
deterministic local provider for offline runs and tests.

The local provider is a hashed bag-of-words projection, documented here
precisely so an independent implementation can reproduce its vectors:

1. lowercase the text and split on Unicode whitespace;
2. for each token, compute slot = blake2b(token, digest_size=8,
   key=b"slot") interpreted as a big-endian integer, modulo ``dims``;
3. compute sign = +1.0 if the last byte of blake2b(token, digest_size=1,
   key=b"sign") is even, else -1.0;
4. accumulate sign into the slot component;
5. if the accumulated vector is all zeros, set component 0 to 1.0;
6. L2-normalize in float64.
"""

from __future__ import annotations

import enum
import hashlib
import math
import os
from dataclasses import dataclass

import httpx
import numpy as np

from .errors import TransportError, ValidationError

EMBED_TOKEN_ENV = "EVR_EMBED_TOKEN"
DEFAULT_LOCAL_DIMS = 256


class ProviderKind(str, enum.Enum):
    REMOTE_API = "remote_api"
    DETERMINISTIC_LOCAL = "deterministic_local"


@dataclass
class EmbeddingProviderSpec:
    provider_kind: ProviderKind
    model_name: str
    dims: int

    def to_json(self) -> dict:
        return {"provider_kind": self.provider_kind.value, "model_name": self.model_name, "dims": self.dims}

    @classmethod
    def from_json(cls, obj: dict) -> "EmbeddingProviderSpec":
        return cls(ProviderKind(obj["provider_kind"]), obj["model_name"], int(obj["dims"]))


@dataclass
class EmbeddingVector:
    dims: int
    values: np.ndarray
    norm: float

    @classmethod
    def from_values(cls, values) -> "EmbeddingVector":
        arr = np.asarray(values, dtype=np.float64)
        if arr.ndim != 1:
            raise ValidationError("bad_vector_shape", f"expected 1-d vector, got shape {arr.shape}")
        return cls(dims=len(arr), values=arr, norm=float(np.linalg.norm(arr)))

    def check_norm(self, rel_tol: float = 1e-9) -> bool:
        recomputed = float(np.linalg.norm(self.values))
        return math.isclose(self.norm, recomputed, rel_tol=rel_tol)


def cosine_similarity(a: EmbeddingVector, b: EmbeddingVector) -> float:
    """Cosine of the angle between two vectors, clamped to [-1, 1]."""
    if a.dims != b.dims:
        raise ValidationError("dims_mismatch", f"{a.dims} != {b.dims}")
    if a.norm == 0.0 or b.norm == 0.0:
        raise ValidationError("zero_norm", "cosine similarity undefined for zero vectors")
    value = float(np.dot(a.values, b.values)) / (a.norm * b.norm)
    return max(-1.0, min(1.0, value))


def _hash_slot(token: str, dims: int) -> int:
    digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8, key=b"slot").digest()
    return int.from_bytes(digest, "big") % dims


def _hash_sign(token: str) -> float:
    digest = hashlib.blake2b(token.encode("utf-8"), digest_size=1, key=b"sign").digest()
    return 1.0 if digest[-1] % 2 == 0 else -1.0


class LocalHashEmbedder:
    """Deterministic hashed bag-of-words embedder (see module docstring)."""

    def __init__(self, dims: int = DEFAULT_LOCAL_DIMS, model_name: str = "local-hash-v1"):
        if dims < 1:
            raise ValidationError("invalid_dims", "dims must be >= 1")
        self.spec = EmbeddingProviderSpec(ProviderKind.DETERMINISTIC_LOCAL, model_name, dims)

    def embed(self, text: str) -> EmbeddingVector:
        tokens = text.lower().split()
        if not tokens:
            raise ValidationError("empty_text", "cannot embed empty text")
        dims = self.spec.dims
        vec = np.zeros(dims, dtype=np.float64)
        for token in tokens:
            vec[_hash_slot(token, dims)] += _hash_sign(token)
        if not vec.any():
            vec[0] = 1.0
        vec /= np.linalg.norm(vec)
        return EmbeddingVector.from_values(vec)


class RemoteEmbedder:
    """HTTP embedding provider: POST {"input": text} -> {"embedding": [...]}.

    The bearer token is read from EVR_EMBED_TOKEN. Transport failures are
    surfaced as retriable TransportError, distinct from input validation.
    """

    def __init__(self, base_url: str, model_name: str, dims: int, timeout: float = 30.0, client=None):
        self.base_url = base_url.rstrip("/")
        self.spec = EmbeddingProviderSpec(ProviderKind.REMOTE_API, model_name, dims)
        self._client = client or httpx.Client(timeout=timeout)

    def embed(self, text: str) -> EmbeddingVector:
        if not text or not text.strip():
            raise ValidationError("empty_text", "cannot embed empty text")
        headers = {}
        token = os.environ.get(EMBED_TOKEN_ENV)
        if token:
            headers["Authorization"] = f"Bearer {token}"
        try:
            resp = self._client.post(self.base_url, json={"input": text}, headers=headers)
            resp.raise_for_status()
        except httpx.HTTPError as exc:
            raise TransportError("embed_transport", f"embedding request failed: {exc}") from exc
        payload = resp.json()
        values = payload.get("embedding")
        if not isinstance(values, list) or len(values) != self.spec.dims:
            raise TransportError(
                "embed_bad_response",
                f"expected {self.spec.dims}-dim embedding, got {type(values).__name__}",
            )
        return EmbeddingVector.from_values(values)


def make_embedder(spec: EmbeddingProviderSpec, base_url: str | None = None):
    if spec.provider_kind is ProviderKind.DETERMINISTIC_LOCAL:
        return LocalHashEmbedder(dims=spec.dims, model_name=spec.model_name)
    if not base_url:
        raise ValidationError("missing_base_url", "remote embedding provider requires a base URL")
    return RemoteEmbedder(base_url, spec.model_name, spec.dims)
