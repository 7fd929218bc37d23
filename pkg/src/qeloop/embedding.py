"""Unit-norm sentence vectors behind a provider contract, with a persistent cache.

The built-in provider is a signed feature hasher (FNV-1a over normalized
tokens, 256 buckets), which is deterministic and needs no model, so the
whole pipeline runs offline. Remote providers speak a single batch HTTP
contract: ``POST {"model": ..., "inputs": [...]} -> {"vectors": [[...]]}``.
"""
from __future__ import annotations

import hashlib
import json
import math
import os
import threading
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Protocol, Sequence

import httpx

_NORM_TOLERANCE = 1e-9

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_FNV_MASK = 0xFFFFFFFFFFFFFFFF

HASH_PROVIDER_ID = "hash-v1"
HASH_DIM = 256


class EmbeddingError(Exception):
    pass


class EmptyText(EmbeddingError):
    def __init__(self):
        super().__init__("cannot embed empty text")


class DimensionMismatch(EmbeddingError):
    def __init__(self, expected: int, got: int):
        self.expected = expected
        self.got = got
        super().__init__(f"provider returned dim {got}, expected {expected}")


class ProviderUnavailable(EmbeddingError):
    def __init__(self, detail: str):
        self.detail = detail
        super().__init__(f"embedding provider unavailable: {detail}")


@dataclass(frozen=True)
class EmbeddingVector:
    """A dense vector with unit L2 norm (or all-zero for token-free text)."""

    provider_id: str
    values: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        n = self.norm()
        if n != 0.0 and abs(n - 1.0) > _NORM_TOLERANCE:
            raise ValueError(f"vector norm {n} outside unit tolerance")

    @property
    def dim(self) -> int:
        return len(self.values)

    def norm(self) -> float:
        return math.sqrt(sum(v * v for v in self.values))

    def is_zero(self) -> bool:
        return all(v == 0.0 for v in self.values)


def l2_normalize(values: Sequence[float]) -> tuple[float, ...]:
    n = math.sqrt(sum(v * v for v in values))
    if n == 0.0:
        return tuple(0.0 for _ in values)
    return tuple(v / n for v in values)


def fnv1a_64(data: str) -> int:
    """64-bit FNV-1a hash of the UTF-8 encoding of ``data``."""
    h = _FNV_OFFSET
    for byte in data.encode("utf-8"):
        h ^= byte
        h = (h * _FNV_PRIME) & _FNV_MASK
    return h


def hash_embed(text: str, stopwords: frozenset[str] | set[str] = frozenset()) -> EmbeddingVector:
    """Signed feature-hash embedding over the normalized token set.

    Token order and multiplicity are irrelevant (set semantics); a text with
    only stopwords embeds to the zero vector.
    """
    from qeloop.textproc import tokenize_normalize

    buckets = [0.0] * HASH_DIM
    for token in tokenize_normalize(text, stopwords):
        h = fnv1a_64(token)
        sign = 1.0 if (h >> 8) & 1 == 0 else -1.0
        buckets[h % HASH_DIM] += sign
    return EmbeddingVector(provider_id=HASH_PROVIDER_ID, values=l2_normalize(buckets))


class EmbeddingProvider(Protocol):
    provider_id: str
    dim: int

    def embed_batch(self, texts: Sequence[str]) -> list[list[float]]:
        """Return one raw (not necessarily normalized) vector per input text."""
        ...


class HashEmbedder:
    """Offline deterministic provider backed by ``hash_embed``."""

    provider_id = HASH_PROVIDER_ID
    dim = HASH_DIM

    def __init__(self, stopwords: frozenset[str] | set[str] = frozenset()):
        self.stopwords = frozenset(stopwords)
        self.calls = 0

    def embed_batch(self, texts: Sequence[str]) -> list[list[float]]:
        self.calls += 1
        return [list(hash_embed(t, self.stopwords).values) for t in texts]


class RemoteEmbeddingProvider:
    """HTTP batch embedding client; non-200 responses map to ProviderUnavailable."""

    def __init__(
        self,
        endpoint: str,
        model: str,
        provider_id: str,
        dim: int,
        token_env: str | None = None,
        timeout: float = 30.0,
        transport: httpx.BaseTransport | None = None,
    ):
        self.endpoint = endpoint
        self.model = model
        self.provider_id = provider_id
        self.dim = dim
        self.token_env = token_env
        self.calls = 0
        self._client = httpx.Client(timeout=timeout, transport=transport)

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self.token_env:
            token = os.environ.get(self.token_env, "")
            if token:
                headers["Authorization"] = f"Bearer {token}"
        return headers

    def embed_batch(self, texts: Sequence[str]) -> list[list[float]]:
        self.calls += 1
        try:
            response = self._client.post(
                self.endpoint,
                json={"model": self.model, "inputs": list(texts)},
                headers=self._headers(),
            )
        except httpx.HTTPError as exc:
            raise ProviderUnavailable(str(exc)) from exc
        if response.status_code != 200:
            raise ProviderUnavailable(f"HTTP {response.status_code}")
        payload = response.json()
        vectors = payload.get("vectors")
        if not isinstance(vectors, list) or len(vectors) != len(texts):
            raise ProviderUnavailable("malformed vectors payload")
        return [list(map(float, v)) for v in vectors]


def normalize_cache_text(text: str) -> str:
    return " ".join(text.split())


def cache_key(provider_id: str, text: str) -> str:
    normalized = normalize_cache_text(text)
    return hashlib.sha256(f"{provider_id}\x1f{normalized}".encode("utf-8")).hexdigest()


class EmbeddingCache:
    """Append-safe on-disk cache keyed by (provider_id, normalized text).

    The normalized text is stored next to each vector, so hash collisions are
    detected instead of silently returning a wrong vector. Readers share the
    in-memory index; writes are serialized by a lock and appended as JSONL.
    """

    def __init__(self, path: str | Path | None = None, clock: Callable[[], str] | None = None):
        self.path = Path(path) if path else None
        self._clock = clock or (lambda: datetime.now(timezone.utc).isoformat())
        self._lock = threading.Lock()
        self._entries: dict[str, tuple[str, EmbeddingVector]] = {}
        self.hits = 0
        self.misses = 0
        if self.path and self.path.exists():
            self._load()

    def _load(self):
        for line in self.path.read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            record = json.loads(line)
            vector = EmbeddingVector(
                provider_id=record["provider_id"], values=tuple(record["vector"])
            )
            self._entries[record["key"]] = (record["text"], vector)

    def get(self, provider_id: str, text: str) -> EmbeddingVector | None:
        key = cache_key(provider_id, text)
        entry = self._entries.get(key)
        if entry is None:
            self.misses += 1
            return None
        stored_text, vector = entry
        if stored_text != normalize_cache_text(text):
            # hash collision: treat as a miss rather than return a wrong vector
            self.misses += 1
            return None
        self.hits += 1
        return vector

    def put(self, provider_id: str, text: str, vector: EmbeddingVector) -> None:
        normalized = normalize_cache_text(text)
        key = cache_key(provider_id, text)
        with self._lock:
            self._entries[key] = (normalized, vector)
            if self.path:
                record = {
                    "key": key,
                    "provider_id": provider_id,
                    "text": normalized,
                    "vector": list(vector.values),
                    "created_at": self._clock(),
                }
                with self.path.open("a", encoding="utf-8") as fh:
                    fh.write(json.dumps(record) + "\n")

    def __len__(self) -> int:
        return len(self._entries)


def embed(text: str, provider: EmbeddingProvider, cache: EmbeddingCache) -> EmbeddingVector:
    """Embed one text through the cache; provider is called only on a miss."""
    if not text.strip():
        raise EmptyText()
    cached = cache.get(provider.provider_id, text)
    if cached is not None:
        return cached
    raw = provider.embed_batch([text])[0]
    if len(raw) != provider.dim:
        raise DimensionMismatch(provider.dim, len(raw))
    vector = EmbeddingVector(provider_id=provider.provider_id, values=l2_normalize(raw))
    cache.put(provider.provider_id, text, vector)
    return vector


class EmbeddingContext:
    """Provider + cache + stopwords bundle used by the similarity layer."""

    def __init__(
        self,
        provider: EmbeddingProvider,
        cache: EmbeddingCache | None = None,
        stopwords: frozenset[str] | set[str] = frozenset(),
    ):
        self.provider = provider
        self.cache = cache or EmbeddingCache()
        self.stopwords = frozenset(stopwords)

    def vector_for(self, text: str) -> EmbeddingVector:
        return embed(text, self.provider, self.cache)

    def vectors_for(self, texts: Sequence[str]) -> list[EmbeddingVector]:
        """Batch variant: one provider call covers all cache misses."""
        missing: list[str] = []
        seen: set[str] = set()
        for t in texts:
            if not t.strip():
                raise EmptyText()
            if cache_key(self.provider.provider_id, t) in seen:
                continue
            if self.cache.get(self.provider.provider_id, t) is None:
                missing.append(t)
                seen.add(cache_key(self.provider.provider_id, t))
        if missing:
            raws = self.provider.embed_batch(missing)
            if len(raws) != len(missing):
                raise ProviderUnavailable("batch size mismatch in provider response")
            for t, raw in zip(missing, raws):
                if len(raw) != self.provider.dim:
                    raise DimensionMismatch(self.provider.dim, len(raw))
                self.cache.put(
                    self.provider.provider_id,
                    t,
                    EmbeddingVector(provider_id=self.provider.provider_id, values=l2_normalize(raw)),
                )
        return [self.vector_for(t) for t in texts]

    def token_set(self, text: str) -> frozenset[str]:
        from qeloop.textproc import tokenize_normalize

        return tokenize_normalize(text, self.stopwords)
