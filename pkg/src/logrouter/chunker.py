"""Sliding-window chunking of normalized records for the semantic branch.

Windows are fixed-size with a fixed overlap (defaults 25/3); the final
partial window is emitted only when it covers at least one line no earlier
window covered, so every line lands in at least one chunk and no chunk is
redundant.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime
from typing import Optional, Sequence

from .errors import InvalidConfigError
from .ingest import LogRecord, Severity

DEFAULT_WINDOW = 25
DEFAULT_OVERLAP = 3


@dataclass(frozen=True)
class Chunk:
    chunk_id: str
    dataset: str
    source_key: str
    start_line: int
    line_count: int
    text: str
    level_histogram: dict
    ts_range: Optional[tuple[datetime, datetime]]

    def metadata(self) -> dict:
        """Filterable fields stored beside the vector."""
        namespace, app, pod = (self.source_key.split("/", 2) + ["unknown"] * 3)[:3]
        return {
            "namespace": namespace,
            "app": app,
            "pod": pod,
            "level": self.dominant_level().value,
            "dataset": self.dataset,
        }

    def dominant_level(self) -> Severity:
        """Most severe level present; UNKNOWN when the histogram is empty."""
        from .ingest import SEVERITY_ORDER

        best = Severity.UNKNOWN
        for name in self.level_histogram:
            level = Severity(name)
            if SEVERITY_ORDER[level] > SEVERITY_ORDER[best]:
                best = level
        return best


def chunk_records(
    records: Sequence[LogRecord],
    dataset: str,
    source_key: str,
    window: int = DEFAULT_WINDOW,
    overlap: int = DEFAULT_OVERLAP,
    start_offset: int = 0,
) -> list[Chunk]:
    """Split one source's ordered records into overlapping line windows.

    `start_offset` shifts the recorded line indices when a source arrives
    in several batches (windows never span batch boundaries).
    """
    if window <= 0:
        raise InvalidConfigError(f"window must be positive, got {window}")
    if overlap < 0 or overlap >= window:
        raise InvalidConfigError(f"overlap must satisfy 0 <= overlap < window, got {overlap}")
    n = len(records)
    chunks: list[Chunk] = []
    step = window - overlap
    covered = 0
    start = 0
    while start < n:
        end = min(start + window, n)
        if end > covered:
            chunks.append(_build_chunk(records[start:end], dataset, source_key, start_offset + start))
            covered = end
        start += step
    return chunks


def _build_chunk(records: Sequence[LogRecord], dataset: str, source_key: str, start: int) -> Chunk:
    histogram: dict[str, int] = {}
    ts_values = []
    for rec in records:
        histogram[rec.level.value] = histogram.get(rec.level.value, 0) + 1
        if rec.ts is not None:
            ts_values.append(rec.ts)
    return Chunk(
        chunk_id=f"{dataset}:{source_key}:{start}",
        dataset=dataset,
        source_key=source_key,
        start_line=start,
        line_count=len(records),
        text="\n".join(rec.line for rec in records),
        level_histogram=histogram,
        ts_range=(min(ts_values), max(ts_values)) if ts_values else None,
    )
