"""Text embedding providers.

All providers return unit-norm float vectors and memoize by exact text, so
repeated utterances across a corpus are embedded once.  HashedBowEmbedder is
fully local and deterministic (hashed bag-of-words); RemoteEmbedder calls an
HTTP embedding endpoint with the same wire shape as the chat backends.
"""

from __future__ import annotations

import hashlib
import re
import threading
from abc import ABC, abstractmethod

import numpy as np

from .errors import ToolkitError

UNIT_NORM_TOL = 1e-6


class ProviderFailure(ToolkitError):
    """The embedding provider could not produce a vector."""


class EmbeddingProvider(ABC):
    """Maps text to a unit-norm vector of fixed dimension."""

    @property
    @abstractmethod
    def dim(self) -> int: ...

    @property
    @abstractmethod
    def name(self) -> str: ...

    @abstractmethod
    def embed(self, text: str) -> np.ndarray: ...


class _CachingProvider(EmbeddingProvider):
    """Base class handling the memoization and unit-norm contract."""

    def __init__(self):
        self._cache: dict[str, np.ndarray] = {}
        self._lock = threading.Lock()

    def embed(self, text: str) -> np.ndarray:
        with self._lock:
            hit = self._cache.get(text)
        if hit is not None:
            return hit
        vec = np.asarray(self._compute(text), dtype=np.float64)
        if vec.shape != (self.dim,):
            raise ProviderFailure(
                f"{self.name} returned shape {vec.shape}, expected ({self.dim},)"
            )
        norm = float(np.linalg.norm(vec))
        if norm <= 0.0 or not np.isfinite(norm):
            raise ProviderFailure(f"{self.name} returned a non-normalizable vector")
        if abs(norm - 1.0) > UNIT_NORM_TOL:
            vec = vec / norm
        vec.setflags(write=False)
        with self._lock:
            self._cache[text] = vec
        return vec

    def _compute(self, text: str) -> np.ndarray:
        raise NotImplementedError

    @property
    def cache_size(self) -> int:
        return len(self._cache)


_TOKEN_RE = re.compile(r"[a-z0-9']+")


def _bucket(token: str, dim: int) -> int:
    digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "big") % dim


class HashedBowEmbedder(_CachingProvider):
    """Deterministic local embedder: hashed bag-of-words, L2-normalized.

    Tokens are lowercase runs of [a-z0-9']; each token is hashed (blake2b)
    into one of ``dim`` buckets and counted.  Inputs with no tokens fall back
    to hashing the raw text as a single token, so the map is total.
    """

    def __init__(self, dim: int = 256):
        super().__init__()
        self._dim = dim

    @property
    def dim(self) -> int:
        return self._dim

    @property
    def name(self) -> str:
        return f"hashed-bow-{self._dim}"

    def _compute(self, text: str) -> np.ndarray:
        tokens = _TOKEN_RE.findall(text.lower())
        vec = np.zeros(self._dim, dtype=np.float64)
        if tokens:
            for tok in tokens:
                vec[_bucket(tok, self._dim)] += 1.0
        else:
            vec[_bucket(text, self._dim)] = 1.0
        return vec / np.linalg.norm(vec)


class RemoteEmbedder(_CachingProvider):
    """Client for an HTTP embedding endpoint.

    Wire contract: POST {"model": ..., "input": [text]} -> JSON
    {"data": [{"embedding": [...]}]}.  Returned vectors are re-normalized
    defensively.  A custom ``post`` callable may be injected for testing;
    the default uses requests with a bearer token.
    """

    def __init__(
        self,
        endpoint: str,
        model: str,
        api_key: str = "",
        dim: int | None = None,
        post=None,
    ):
        super().__init__()
        self.endpoint = endpoint
        self.model = model
        self._api_key = api_key
        self._dim = dim  # inferred from the first response when None
        self._post = post or self._requests_post

    @property
    def dim(self) -> int:
        if self._dim is None:
            raise ProviderFailure("remote embedding dimension unknown before first call")
        return self._dim

    @property
    def name(self) -> str:
        return f"remote:{self.model}"

    def _requests_post(self, payload: dict) -> dict:
        import requests

        headers = {"Content-Type": "application/json"}
        if self._api_key:
            headers["Authorization"] = f"Bearer {self._api_key}"
        resp = requests.post(self.endpoint, json=payload, headers=headers, timeout=60)
        resp.raise_for_status()
        return resp.json()

    def _compute(self, text: str) -> np.ndarray:
        try:
            out = self._post({"model": self.model, "input": [text]})
            vec = np.asarray(out["data"][0]["embedding"], dtype=np.float64)
        except ProviderFailure:
            raise
        except Exception as exc:
            raise ProviderFailure(f"embedding request failed: {exc}") from exc
        if self._dim is None:
            self._dim = int(vec.shape[0])
        return vec


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine of two unit vectors (a plain dot product)."""
    return float(np.dot(a, b))
