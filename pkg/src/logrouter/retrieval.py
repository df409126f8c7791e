"""Hybrid retrieval for the semantic path.

Dense and full-text queries run over the chunk corpus (plus one extra FTS
query per quoted literal in the question); the ranked lists are fused with
Reciprocal Rank Fusion and the top-k chunks are returned. Pure-dense and
pure-keyword variants exist for the ablation conditions, and the hybrid
path degrades to keyword-only when the embedding provider is down.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Optional

from .chunker import Chunk
from .errors import ProviderUnavailableError
from .indexes.keyword import KeywordIndex
from .indexes.vector import VectorStore

DEFAULT_K_RRF = 60
DEFAULT_TOP_K = 10
DEFAULT_PER_BACKEND = 20

STRATEGY_HYBRID = "hybrid"
STRATEGY_DENSE_ONLY = "dense_only"
STRATEGY_KEYWORD_ONLY = "keyword_only"
STRATEGIES = (STRATEGY_HYBRID, STRATEGY_DENSE_ONLY, STRATEGY_KEYWORD_ONLY)


@dataclass
class RankedList:
    source: str  # "dense" | "fts" | "literal_fts"
    items: list  # [(id, score)] strictly ordered, no duplicate ids


@dataclass
class FusedResult:
    items: list  # [(id, rrf_score, contributing_sources)]
    k_rrf: int


_QUOTED_RE = re.compile(r"\"([^\"]*)\"|'([^']*)'")


def extract_quoted_literals(question: str) -> list[str]:
    """Maximal spans inside balanced single/double quotes, in order, empties dropped."""
    out = []
    for m in _QUOTED_RE.finditer(question):
        span = m.group(1) if m.group(1) is not None else m.group(2)
        if span and span.strip():
            out.append(span)
    return out


def rrf_fuse(lists: list[RankedList], k_rrf: int = DEFAULT_K_RRF) -> FusedResult:
    """Reciprocal Rank Fusion: score(id) = sum over lists of 1/(k + rank), ranks 1-based."""
    scores: dict = {}
    sources: dict = {}
    for ranked in lists:
        for rank, (item_id, _) in enumerate(ranked.items, start=1):
            scores[item_id] = scores.get(item_id, 0.0) + 1.0 / (k_rrf + rank)
            sources.setdefault(item_id, []).append(ranked.source)
    ordered = sorted(scores.items(), key=lambda kv: (-kv[1], str(kv[0])))
    return FusedResult(
        items=[(item_id, score, sources[item_id]) for item_id, score in ordered],
        k_rrf=k_rrf,
    )


@dataclass
class RetrievalResult:
    chunks: list  # [(Chunk, score)]
    strategy: str
    degraded_reason: Optional[str] = None
    lists: list = field(default_factory=list)  # the RankedLists that went into fusion


class Retriever:
    """Binds the chunk FTS index, vector store, and embedding provider."""

    def __init__(self, vector_store: VectorStore, chunk_fts: KeywordIndex, provider):
        self.vector_store = vector_store
        self.chunk_fts = chunk_fts
        self.provider = provider

    def retrieve(
        self,
        question: str,
        strategy: str = STRATEGY_HYBRID,
        top_k: int = DEFAULT_TOP_K,
        per_backend: int = DEFAULT_PER_BACKEND,
        k_rrf: int = DEFAULT_K_RRF,
        filters: Optional[dict] = None,
    ) -> RetrievalResult:
        if strategy not in STRATEGIES:
            raise ValueError(f"unknown retrieval strategy: {strategy!r}")
        doc_filter = self._doc_filter(filters)

        if strategy == STRATEGY_KEYWORD_ONLY:
            fts = self._fts_list(question, per_backend, doc_filter)
            return self._materialize([fts], top_k, strategy, fuse=False)

        try:
            query_vec = self.provider.embed(question)
            dense = RankedList(
                source="dense",
                items=self.vector_store.search(query_vec, filters=filters, top_n=per_backend),
            )
        except ProviderUnavailableError as exc:
            # resilience: fall back to keyword-only rather than failing
            fts = self._fts_list(question, per_backend, doc_filter)
            result = self._materialize([fts], top_k, STRATEGY_KEYWORD_ONLY, fuse=False)
            result.degraded_reason = f"embedding provider unavailable: {exc}"
            return result

        if strategy == STRATEGY_DENSE_ONLY:
            return self._materialize([dense], top_k, strategy, fuse=False)

        lists = [dense, self._fts_list(question, per_backend, doc_filter)]
        for literal in extract_quoted_literals(question):
            lists.append(
                RankedList(
                    source="literal_fts",
                    items=self.chunk_fts.search(literal, top_n=per_backend, doc_filter=doc_filter),
                )
            )
        return self._materialize(lists, top_k, STRATEGY_HYBRID, fuse=True, k_rrf=k_rrf)

    def _fts_list(self, question: str, per_backend: int, doc_filter) -> RankedList:
        return RankedList(
            source="fts",
            items=self.chunk_fts.search(question, top_n=per_backend, doc_filter=doc_filter),
        )

    def _doc_filter(self, filters: Optional[dict]):
        if not filters:
            return None

        def check(chunk_id) -> bool:
            chunk = self.vector_store.chunk(chunk_id)
            if chunk is None:
                return False
            meta = chunk.metadata()
            return all(meta.get(k) == v for k, v in filters.items())

        return check

    def _materialize(self, lists, top_k, strategy, fuse, k_rrf=DEFAULT_K_RRF) -> RetrievalResult:
        if fuse:
            fused = rrf_fuse(lists, k_rrf=k_rrf)
            scored = [(cid, score) for cid, score, _ in fused.items[:top_k]]
        else:
            scored = [(cid, score) for cid, score in lists[0].items[:top_k]]
        chunks = []
        for cid, score in scored:
            chunk = self.vector_store.chunk(cid)
            if chunk is None:
                chunk = self._chunk_from_fts(cid)
            if chunk is not None:
                chunks.append((chunk, score))
        return RetrievalResult(chunks=chunks, strategy=strategy, lists=list(lists))

    def _chunk_from_fts(self, chunk_id) -> Optional[Chunk]:
        # keyword-only mode can run with an empty vector store; synthesize a
        # minimal chunk from the FTS corpus so evidence still carries text
        text = self.chunk_fts.text_of(chunk_id)
        if text is None:
            return None
        return Chunk(
            chunk_id=str(chunk_id),
            dataset="unknown",
            source_key="unknown/unknown/unknown",
            start_line=0,
            line_count=text.count("\n") + 1,
            text=text,
            level_histogram={},
            ts_range=None,
        )
