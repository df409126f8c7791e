"""Exact-cosine vector store over chunks, with metadata filtering.

Embedded and desk-scale: brute-force cosine over every entry passing the
filters, fully deterministic ordering (score descending, chunk_id
ascending on ties).
"""

from __future__ import annotations

import json
from typing import Optional

import numpy as np

from ..chunker import Chunk
from ..embedding import EmbeddingVector
from ..errors import StoreContractError


class VectorStore:
    def __init__(self, dim: int, provider_tag: str = ""):
        self.dim = dim
        self.provider_tag = provider_tag
        self._chunks: dict[str, Chunk] = {}
        self._metadata: dict[str, dict] = {}
        self._order: list[str] = []
        self._matrix: Optional[np.ndarray] = None  # unit rows, rebuilt lazily

    def __len__(self) -> int:
        return len(self._order)

    def add(self, chunk: Chunk, vector: EmbeddingVector, metadata: Optional[dict] = None) -> None:
        if vector.dim != self.dim:
            raise StoreContractError(f"vector dim {vector.dim} != store dim {self.dim}")
        if self.provider_tag and vector.provider_tag != self.provider_tag:
            raise StoreContractError(
                f"provider {vector.provider_tag!r} != store provider {self.provider_tag!r}"
            )
        if not self.provider_tag:
            self.provider_tag = vector.provider_tag
        cid = chunk.chunk_id
        if cid not in self._chunks:
            self._order.append(cid)
        self._chunks[cid] = chunk
        self._metadata[cid] = dict(metadata if metadata is not None else chunk.metadata())
        # float64 in memory for stable ranking; snapshots are float32 LE
        self._metadata[cid]["_vector"] = np.asarray(vector.values, dtype=np.float64)
        self._matrix = None

    def chunk(self, chunk_id: str) -> Optional[Chunk]:
        return self._chunks.get(chunk_id)

    def chunk_ids(self) -> list[str]:
        return list(self._order)

    def _ensure_matrix(self) -> np.ndarray:
        if self._matrix is None:
            if not self._order:
                self._matrix = np.zeros((0, self.dim), dtype=np.float64)
            else:
                rows = np.stack([self._metadata[cid]["_vector"] for cid in self._order])
                norms = np.linalg.norm(rows, axis=1, keepdims=True)
                norms[norms == 0] = 1.0
                self._matrix = rows / norms
        return self._matrix

    def search(
        self,
        query: EmbeddingVector,
        filters: Optional[dict] = None,
        top_n: int = 20,
    ) -> list[tuple[str, float]]:
        """Exact cosine over entries passing `filters` (field == value, ANDed)."""
        if query.dim != self.dim:
            raise StoreContractError(f"query dim {query.dim} != store dim {self.dim}")
        if not self._order:
            return []
        matrix = self._ensure_matrix()
        q = np.asarray(query.values, dtype=np.float64)
        qn = np.linalg.norm(q)
        if qn == 0:
            return []
        sims = matrix @ (q / qn)
        candidates = []
        for pos, cid in enumerate(self._order):
            if filters and not self._passes(cid, filters):
                continue
            candidates.append((cid, float(sims[pos])))
        candidates.sort(key=lambda kv: (-kv[1], kv[0]))
        return candidates[:top_n]

    def _passes(self, chunk_id: str, filters: dict) -> bool:
        meta = self._metadata[chunk_id]
        for key, value in filters.items():
            if meta.get(key) != value:
                return False
        return True

    # --- snapshots --------------------------------------------------------

    def save(self, path) -> None:
        """Binary snapshot: JSON header line, float32 LE records; sidecar manifest."""
        matrix = np.stack(
            [self._metadata[cid]["_vector"] for cid in self._order]
        ) if self._order else np.zeros((0, self.dim), dtype=np.float32)
        header = {"dim": self.dim, "provider_tag": self.provider_tag, "count": len(self._order)}
        with open(path, "wb") as fh:
            fh.write((json.dumps(header, sort_keys=True) + "\n").encode("utf-8"))
            fh.write(matrix.astype("<f4").tobytes())
        with open(str(path) + ".manifest.jsonl", "w", encoding="utf-8") as fh:
            for cid in self._order:
                chunk = self._chunks[cid]
                meta = {k: v for k, v in self._metadata[cid].items() if k != "_vector"}
                fh.write(json.dumps({
                    "chunk_id": cid,
                    "dataset": chunk.dataset,
                    "source_key": chunk.source_key,
                    "start_line": chunk.start_line,
                    "line_count": chunk.line_count,
                    "text": chunk.text,
                    "level_histogram": chunk.level_histogram,
                    "ts_range": [t.isoformat() for t in chunk.ts_range] if chunk.ts_range else None,
                    "metadata": meta,
                }, sort_keys=True, ensure_ascii=False) + "\n")

    @classmethod
    def load(cls, path) -> "VectorStore":
        from datetime import datetime

        with open(path, "rb") as fh:
            header = json.loads(fh.readline().decode("utf-8"))
            raw = fh.read()
        store = cls(dim=header["dim"], provider_tag=header.get("provider_tag", ""))
        count = header["count"]
        matrix = np.frombuffer(raw, dtype="<f4").reshape(count, header["dim"]) if count else None
        with open(str(path) + ".manifest.jsonl", "r", encoding="utf-8") as fh:
            for i, line in enumerate(fh):
                entry = json.loads(line)
                ts_range = entry.get("ts_range")
                chunk = Chunk(
                    chunk_id=entry["chunk_id"],
                    dataset=entry["dataset"],
                    source_key=entry["source_key"],
                    start_line=entry["start_line"],
                    line_count=entry["line_count"],
                    text=entry["text"],
                    level_histogram=entry["level_histogram"],
                    ts_range=tuple(datetime.fromisoformat(t) for t in ts_range) if ts_range else None,
                )
                vec = EmbeddingVector(
                    values=tuple(float(v) for v in matrix[i]),
                    dim=header["dim"],
                    provider_tag=store.provider_tag or "snapshot",
                )
                store.add(chunk, vec, metadata=entry["metadata"])
        return store
