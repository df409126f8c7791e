"""Embedding providers behind one interface.

Two implementations: a remote HTTP client for a live embedding model, and
a seeded feature-hashing embedder that needs no model at all (tokens are
hashed into sign-carrying buckets and the result is L2-normalized). The
hashed provider keeps the whole pipeline deterministic and offline.
"""

from __future__ import annotations

import hashlib
import math
import os
import threading
from dataclasses import dataclass
from typing import Optional, Sequence

import requests

from .errors import ProviderContractError, ProviderUnavailableError
from .tokens import simple_tokens

EMBED_URL_ENV = "LOGROUTER_EMBED_URL"

DEFAULT_REMOTE_DIM = 768
DEFAULT_HASHED_DIM = 256


@dataclass(frozen=True)
class EmbeddingVector:
    values: tuple[float, ...]
    dim: int
    provider_tag: str

    def __post_init__(self):
        if len(self.values) != self.dim:
            raise ProviderContractError(
                f"vector length {len(self.values)} != declared dim {self.dim}"
            )


@dataclass(frozen=True)
class EmbeddingProviderConfig:
    kind: str = "hashed"  # "remote" | "hashed"
    endpoint: Optional[str] = None
    model_tag: Optional[str] = None
    dim: int = 0  # 0 -> kind default
    timeout: float = 10.0
    seed: int = 0
    max_inflight: int = 4  # remote only: bound on concurrent requests

    def resolved_dim(self) -> int:
        if self.dim:
            return self.dim
        return DEFAULT_REMOTE_DIM if self.kind == "remote" else DEFAULT_HASHED_DIM

    def validate(self) -> None:
        if self.kind not in ("remote", "hashed"):
            raise ValueError(f"unknown embedding provider kind: {self.kind!r}")
        if self.kind == "remote" and not (self.resolved_endpoint() and self.model_tag):
            raise ValueError("remote embedding provider requires endpoint and model_tag")

    def resolved_endpoint(self) -> Optional[str]:
        return os.environ.get(EMBED_URL_ENV) or self.endpoint


def cosine(a: Sequence[float], b: Sequence[float]) -> float:
    dot = sum(x * y for x, y in zip(a, b))
    na = math.sqrt(sum(x * x for x in a))
    nb = math.sqrt(sum(y * y for y in b))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return dot / (na * nb)


class HashedEmbedder:
    """Seeded signed feature hashing over simple tokens; stateless after init."""

    def __init__(self, cfg: EmbeddingProviderConfig):
        self.dim = cfg.resolved_dim()
        self.seed = cfg.seed
        self.provider_tag = f"hashed-{self.dim}-s{self.seed}"

    def _bucket(self, token: str) -> tuple[int, float]:
        digest = hashlib.md5(f"{self.seed}:{token}".encode("utf-8")).digest()
        bucket = int.from_bytes(digest[:4], "little") % self.dim
        sign = 1.0 if digest[4] & 1 else -1.0
        return bucket, sign

    def embed(self, text: str) -> EmbeddingVector:
        if not text:
            raise ValueError("cannot embed empty text")
        tokens = simple_tokens(text) or [text]
        values = [0.0] * self.dim
        for token in tokens:
            bucket, sign = self._bucket(token)
            values[bucket] += sign
        norm = math.sqrt(sum(v * v for v in values))
        if norm == 0.0:
            # all contributions cancelled; fall back to a one-hot of the raw text
            bucket, _ = self._bucket("\x00" + text)
            values[bucket] = 1.0
            norm = 1.0
        return EmbeddingVector(
            values=tuple(v / norm for v in values),
            dim=self.dim,
            provider_tag=self.provider_tag,
        )

    def embed_batch(self, texts: Sequence[str]) -> list[EmbeddingVector]:
        return [self.embed(t) for t in texts]


class RemoteEmbedder:
    """Client for a local-inference embedding endpoint (POST /api/embeddings)."""

    def __init__(self, cfg: EmbeddingProviderConfig):
        cfg.validate()
        self.endpoint = cfg.resolved_endpoint().rstrip("/")
        self.model_tag = cfg.model_tag
        self.dim = cfg.resolved_dim()
        self.timeout = cfg.timeout
        self.provider_tag = f"remote-{self.model_tag}"
        self._gate = threading.Semaphore(max(1, cfg.max_inflight))

    def embed(self, text: str) -> EmbeddingVector:
        if not text:
            raise ValueError("cannot embed empty text")
        try:
            with self._gate:
                resp = requests.post(
                    f"{self.endpoint}/api/embeddings",
                    json={"model": self.model_tag, "prompt": text},
                    timeout=self.timeout,
                )
            resp.raise_for_status()
            payload = resp.json()
        except (requests.RequestException, ValueError) as exc:
            raise ProviderUnavailableError(f"embedding endpoint failed: {exc}") from exc
        values = payload.get("embedding")
        if not isinstance(values, list):
            raise ProviderContractError("response missing 'embedding' array")
        if len(values) != self.dim:
            raise ProviderContractError(
                f"embedding dim {len(values)} != configured {self.dim}"
            )
        return EmbeddingVector(values=tuple(float(v) for v in values), dim=self.dim, provider_tag=self.provider_tag)

    def embed_batch(self, texts: Sequence[str]) -> list[EmbeddingVector]:
        # whole batch fails on first error: keeps index writes atomic
        return [self.embed(t) for t in texts]


def make_provider(cfg: EmbeddingProviderConfig):
    cfg.validate()
    if cfg.kind == "remote":
        return RemoteEmbedder(cfg)
    return HashedEmbedder(cfg)
