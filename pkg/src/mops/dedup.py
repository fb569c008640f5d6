"""Sentence-embedding providers and cosine-similarity deduplication.

Candidate pools are small (tens of items), so dedup is an exact pairwise
scan: a newcomer is accepted only if its cosine similarity to every
already-accepted member stays below the threshold.
"""

from __future__ import annotations

import hashlib
import json
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np
import requests

__all__ = [
    "DEFAULT_EPSILON",
    "EmbeddingError",
    "EmbeddingProvider",
    "StubEmbedder",
    "HttpEmbedder",
    "SentenceTransformerEmbedder",
    "CachedEmbedder",
    "cosine_similarity",
    "DedupResult",
    "DedupPool",
]

# Similarity at or above this rejects the newcomer.
DEFAULT_EPSILON = 0.85


class EmbeddingError(Exception):
    """Embedding provider failure or inconsistent batch."""


class EmbeddingProvider(Protocol):
    name: str

    def embed(self, texts: Sequence[str]) -> np.ndarray: ...


def _check_batch(texts: Sequence[str]) -> None:
    if not texts:
        raise EmbeddingError("cannot embed an empty batch")
    for t in texts:
        if not isinstance(t, str) or not t:
            raise EmbeddingError(f"texts must be non-empty strings, got {t!r}")


class StubEmbedder:
    """Deterministic hash-seeded vectors for offline runs and tests.

    The same text always maps to the same vector, on any platform, so the
    whole pipeline stays bit-reproducible without a model.
    """

    def __init__(self, dim: int = 32):
        if dim < 2:
            raise ValueError("stub embedding dim must be >= 2")
        self.dim = dim
        self.name = f"stub-{dim}"

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        _check_batch(texts)
        out = np.empty((len(texts), self.dim), dtype=np.float64)
        for i, text in enumerate(texts):
            seed = int.from_bytes(hashlib.sha256(text.encode("utf-8")).digest()[:4], "big")
            out[i] = np.random.RandomState(seed).standard_normal(self.dim)
        return out


class HttpEmbedder:
    """OpenAI-compatible /embeddings endpoint."""

    def __init__(self, base_url: str, model: str, api_key: str, timeout: float = 60.0):
        self._url = base_url.rstrip("/") + "/embeddings"
        self._model = model
        self._key = api_key
        self._timeout = timeout
        self.name = f"http:{model}"

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        _check_batch(texts)
        try:
            resp = requests.post(
                self._url,
                json={"model": self._model, "input": list(texts)},
                headers={"Authorization": f"Bearer {self._key}"},
                timeout=self._timeout,
            )
            resp.raise_for_status()
            data = resp.json()["data"]
        except (requests.RequestException, KeyError, ValueError) as exc:
            raise EmbeddingError(f"embedding request failed: {exc}") from exc
        if len(data) != len(texts):
            raise EmbeddingError(f"expected {len(texts)} embeddings, got {len(data)}")
        rows = [item["embedding"] for item in sorted(data, key=lambda d: d.get("index", 0))]
        arr = np.asarray(rows, dtype=np.float64)
        if arr.ndim != 2:
            raise EmbeddingError("embedding batch has inconsistent dimensions")
        return arr


class SentenceTransformerEmbedder:
    """Local sentence-transformers model (optional dependency)."""

    def __init__(self, model: str = "all-MiniLM-L6-v2"):
        try:
            from sentence_transformers import SentenceTransformer
        except ImportError as exc:  # pragma: no cover - optional extra
            raise EmbeddingError(
                "sentence-transformers is not installed; use the stub or http provider"
            ) from exc
        self._model = SentenceTransformer(model)
        self.name = f"local:{model}"

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        _check_batch(texts)
        vecs = self._model.encode(list(texts), convert_to_numpy=True, show_progress_bar=False)
        return np.asarray(vecs, dtype=np.float64)


class CachedEmbedder:
    """Content-addressed, append-only embedding cache in front of a provider.

    The cache file is JSON-lines of ``{"h": sha256(text), "v": [...]}``,
    persisted beside the run's other outputs so reruns are cheap and
    deterministic.
    """

    def __init__(self, provider: EmbeddingProvider, path: str | Path):
        self._provider = provider
        self._path = Path(path)
        self.name = provider.name
        self._mem: dict[str, np.ndarray] = {}
        self._lock = threading.Lock()
        if self._path.exists():
            with self._path.open(encoding="utf-8") as fh:
                for line in fh:
                    if not line.strip():
                        continue
                    rec = json.loads(line)
                    self._mem[rec["h"]] = np.asarray(rec["v"], dtype=np.float64)

    @staticmethod
    def _key(text: str) -> str:
        return hashlib.sha256(text.encode("utf-8")).hexdigest()

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        _check_batch(texts)
        keys = [self._key(t) for t in texts]
        with self._lock:
            missing_idx = [i for i, k in enumerate(keys) if k not in self._mem]
            if missing_idx:
                fresh = self._provider.embed([texts[i] for i in missing_idx])
                self._path.parent.mkdir(parents=True, exist_ok=True)
                with self._path.open("a", encoding="utf-8") as fh:
                    for row, i in zip(fresh, missing_idx):
                        self._mem[keys[i]] = row
                        fh.write(json.dumps({"h": keys[i], "v": row.tolist()}) + "\n")
            return np.stack([self._mem[k] for k in keys])


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """Standard cosine similarity in [-1, 1]; rejects zero or mismatched vectors."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"vectors must share one dimension, got {a.shape} and {b.shape}")
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        raise ValueError("cosine similarity is undefined for zero vectors")
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


@dataclass(frozen=True)
class DedupResult:
    accepted: bool
    text: str
    nearest: str | None = None
    similarity: float | None = None


class DedupPool:
    """First-come-first-kept pool enforcing pairwise cosine < epsilon.

    One pool guards one sibling set (same parent path, same kind/subkind);
    insertions are serialized, distinct pools are independent.
    """

    def __init__(self, embedder: EmbeddingProvider, epsilon: float = DEFAULT_EPSILON):
        if not 0.0 < epsilon <= 1.0:
            raise ValueError(f"epsilon must be in (0, 1], got {epsilon}")
        self.embedder = embedder
        self.epsilon = epsilon
        self._texts: list[str] = []
        self._vectors: list[np.ndarray] = []
        self._lock = threading.Lock()

    @property
    def accepted_texts(self) -> list[str]:
        return list(self._texts)

    def adopt(self, texts: Sequence[str]) -> None:
        """Register texts that are already members (e.g. on resume), unchecked."""
        if not texts:
            return
        vecs = self.embedder.embed(texts)
        with self._lock:
            for text, vec in zip(texts, vecs):
                self._texts.append(text)
                self._vectors.append(vec)

    def insert(self, text: str) -> DedupResult:
        vec = self.embedder.embed([text])[0]
        with self._lock:
            if self._vectors and vec.shape != self._vectors[0].shape:
                raise EmbeddingError(
                    f"dimension mismatch: pool holds {self._vectors[0].shape}, got {vec.shape}"
                )
            best_sim = None
            best_text = None
            for member_text, member_vec in zip(self._texts, self._vectors):
                sim = cosine_similarity(vec, member_vec)
                if best_sim is None or sim > best_sim:
                    best_sim = sim
                    best_text = member_text
            if best_sim is not None and best_sim >= self.epsilon:
                return DedupResult(False, text, nearest=best_text, similarity=best_sim)
            self._texts.append(text)
            self._vectors.append(vec)
            return DedupResult(True, text, nearest=best_text, similarity=best_sim)
