"""Structured row store and the restricted aggregation executor.

This is the SQL backend: annotated records land here one-to-one, and the
only queries that run are the restricted shapes (COUNT, COUNT-GROUP-BY,
TOP-K, PERCENTAGE over a conjunction of simple predicates). Generated SQL
text is parsed into that shape or rejected, which closes the injection
surface and keeps results brute-force checkable.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Optional

from ..drain import Template
from ..errors import EmptyStoreError, InvalidPatternError, InvalidQueryError
from ..ingest import LogRecord, Severity

TABLE_NAME = "logs_raw"

COLUMNS = ("ts", "namespace", "app", "pod", "container", "level", "line", "template_id")


@dataclass(frozen=True)
class StructuredRow:
    ts: Optional[datetime]
    namespace: str
    app: str
    pod: str
    container: str
    level: str
    line: str
    template_id: str
    # addressing fields, not part of the logical schema
    dataset: str = "unknown"
    source_key: str = "unknown/unknown/unknown"
    line_no: int = 0

    def value(self, column: str):
        if column not in COLUMNS:
            raise InvalidQueryError(f"unknown column: {column}")
        return getattr(self, column)

    def to_dict(self) -> dict:
        return {
            "ts": self.ts.isoformat() if self.ts else None,
            "namespace": self.namespace,
            "app": self.app,
            "pod": self.pod,
            "container": self.container,
            "level": self.level,
            "line": self.line,
            "template_id": self.template_id,
            "dataset": self.dataset,
            "source_key": self.source_key,
            "line_no": self.line_no,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "StructuredRow":
        ts = d.get("ts")
        return cls(
            ts=datetime.fromisoformat(ts) if ts else None,
            namespace=d["namespace"],
            app=d["app"],
            pod=d["pod"],
            container=d["container"],
            level=d["level"],
            line=d["line"],
            template_id=d["template_id"],
            dataset=d.get("dataset", "unknown"),
            source_key=d.get("source_key", "unknown/unknown/unknown"),
            line_no=d.get("line_no", 0),
        )


@dataclass(frozen=True)
class Predicate:
    column: str
    op: str  # "eq" | "like" | "between"
    value: object

    def matches(self, row: StructuredRow) -> bool:
        actual = row.value(self.column)
        if self.op == "eq":
            return actual == self.value
        if self.op == "like":
            return actual is not None and _like_regex(str(self.value)).search(str(actual)) is not None
        if self.op == "between":
            lo, hi = self.value
            return actual is not None and lo <= actual <= hi
        raise InvalidQueryError(f"unknown predicate op: {self.op}")

    def describe(self) -> str:
        if self.op == "eq":
            return f"{self.column} = '{self.value}'"
        if self.op == "like":
            return f"{self.column} LIKE '{self.value}'"
        lo, hi = self.value
        return f"{self.column} BETWEEN '{lo.isoformat()}' AND '{hi.isoformat()}'"


def _like_regex(pattern: str) -> re.Pattern:
    # SQL LIKE: % -> .*, _ -> . ; anchored full match
    out = []
    for ch in pattern:
        if ch == "%":
            out.append(".*")
        elif ch == "_":
            out.append(".")
        else:
            out.append(re.escape(ch))
    return re.compile("^" + "".join(out) + "$")


@dataclass(frozen=True)
class RestrictedQuery:
    kind: str  # "count" | "group_count" | "top_k" | "percentage"
    column: Optional[str] = None
    k: Optional[int] = None
    pct_predicate: Optional[Predicate] = None
    where: tuple[Predicate, ...] = ()
    limit: Optional[int] = None

    def validate(self) -> None:
        if self.kind not in ("count", "group_count", "top_k", "percentage"):
            raise InvalidQueryError(f"unknown aggregation kind: {self.kind}")
        if self.kind in ("group_count", "top_k"):
            if not self.column:
                raise InvalidQueryError(f"{self.kind} requires a column")
            if self.column not in COLUMNS:
                raise InvalidQueryError(f"unknown column: {self.column}")
        if self.kind == "top_k" and (self.k is None or self.k <= 0):
            raise InvalidQueryError("top_k requires positive k")
        if self.kind == "percentage" and self.pct_predicate is None:
            raise InvalidQueryError("percentage requires a predicate")
        for pred in self.where:
            if pred.column not in COLUMNS:
                raise InvalidQueryError(f"unknown column: {pred.column}")

    def to_sql(self) -> str:
        where = ""
        if self.where:
            where = " WHERE " + " AND ".join(p.describe() for p in self.where)
        if self.kind == "count":
            return f"SELECT COUNT(*) FROM {TABLE_NAME}{where}"
        if self.kind == "group_count":
            sql = f"SELECT {self.column}, COUNT(*) FROM {TABLE_NAME}{where} GROUP BY {self.column} ORDER BY COUNT(*) DESC"
            if self.limit:
                sql += f" LIMIT {self.limit}"
            return sql
        if self.kind == "top_k":
            return (
                f"SELECT {self.column}, COUNT(*) FROM {TABLE_NAME}{where} "
                f"GROUP BY {self.column} ORDER BY COUNT(*) DESC LIMIT {self.k}"
            )
        return f"SELECT PERCENTAGE({self.pct_predicate.describe()}) FROM {TABLE_NAME}{where}"


class RowStore:
    """In-memory structured store with optional NDJSON snapshots."""

    def __init__(self):
        self.rows: list[StructuredRow] = []

    def __len__(self) -> int:
        return len(self.rows)

    def add(self, row: StructuredRow) -> None:
        self.rows.append(row)

    def add_annotated(self, record: LogRecord, template_id: str, dataset: str, source_key: str, line_no: int) -> None:
        self.rows.append(
            StructuredRow(
                ts=record.ts,
                namespace=record.namespace,
                app=record.app,
                pod=record.pod,
                container=record.container,
                level=record.level.value,
                line=record.line,
                template_id=template_id,
                dataset=dataset,
                source_key=source_key,
                line_no=line_no,
            )
        )

    def ts_range(self) -> Optional[tuple[datetime, datetime]]:
        values = [r.ts for r in self.rows if r.ts is not None]
        if not values:
            return None
        return min(values), max(values)

    def rows_in_span(self, dataset: str, source_key: str, start_line: int, line_count: int) -> list[StructuredRow]:
        lo, hi = start_line, start_line + line_count
        return [
            r
            for r in self.rows
            if r.dataset == dataset and r.source_key == source_key and lo <= r.line_no < hi
        ]

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for row in self.rows:
                fh.write(json.dumps(row.to_dict(), sort_keys=True, ensure_ascii=False) + "\n")

    @classmethod
    def load(cls, path) -> "RowStore":
        store = cls()
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    store.add(StructuredRow.from_dict(json.loads(line)))
        return store


def execute_restricted(query: RestrictedQuery, store: RowStore):
    """Exact relational semantics; results are brute-force reproducible."""
    query.validate()
    selected = [row for row in store.rows if all(p.matches(row) for p in query.where)]
    if query.kind == "count":
        return len(selected)
    if query.kind == "percentage":
        if not selected:
            raise EmptyStoreError("PERCENTAGE over empty selection")
        matching = sum(1 for row in selected if query.pct_predicate.matches(row))
        return 100.0 * matching / len(selected)
    # group_count / top_k
    counts: dict[str, int] = {}
    for row in selected:
        value = row.value(query.column)
        if isinstance(value, datetime):
            value = value.isoformat()
        key = "" if value is None else str(value)
        counts[key] = counts.get(key, 0) + 1
    groups = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    if query.kind == "top_k":
        groups = groups[: query.k]
    if query.limit is not None:
        groups = groups[: query.limit]
    return groups


def template_lookup(pattern: str, catalogue: dict[str, Template], store: RowStore) -> list[Template]:
    """Templates matching `pattern` over the template OR line columns.

    Deduplicated by template_id, ordered by match_count descending
    (template_id ascending on ties).
    """
    try:
        compiled = re.compile(pattern, re.IGNORECASE)
    except re.error as exc:
        raise InvalidPatternError(f"invalid regex {pattern!r}: {exc}") from exc
    hits: dict[str, Template] = {}
    for tid, template in catalogue.items():
        if compiled.search(template.template_string):
            hits[tid] = template
    for row in store.rows:
        if row.template_id in hits or row.template_id not in catalogue:
            continue
        if compiled.search(row.line):
            hits[row.template_id] = catalogue[row.template_id]
    return sorted(hits.values(), key=lambda t: (-t.match_count, t.template_id))


# --- SQL text parsing ---------------------------------------------------

_LITERAL = r"'((?:[^']|'')*)'"


def _unquote(raw: str) -> str:
    return raw.replace("''", "'")


def _parse_ts_literal(raw: str) -> datetime:
    try:
        dt = datetime.fromisoformat(raw.replace("Z", "+00:00"))
    except ValueError as exc:
        raise InvalidQueryError(f"bad timestamp literal: {raw!r}") from exc
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt


def _parse_predicate(text: str) -> Predicate:
    text = text.strip()
    m = re.fullmatch(rf"(\w+)\s*=\s*{_LITERAL}", text)
    if m:
        column, value = m.group(1).lower(), _unquote(m.group(2))
        if column not in COLUMNS:
            raise InvalidQueryError(f"unknown column: {column}")
        if column == "level" and value.upper() not in Severity.__members__:
            raise InvalidQueryError(f"unknown severity literal: {value!r}")
        return Predicate(column, "eq", value.upper() if column == "level" else value)
    m = re.fullmatch(rf"(\w+)\s+LIKE\s+{_LITERAL}", text, re.IGNORECASE)
    if m:
        column = m.group(1).lower()
        if column not in COLUMNS:
            raise InvalidQueryError(f"unknown column: {column}")
        return Predicate(column, "like", _unquote(m.group(2)))
    m = re.fullmatch(rf"ts\s+BETWEEN\s+{_LITERAL}\s+AND\s+{_LITERAL}", text, re.IGNORECASE)
    if m:
        lo, hi = _parse_ts_literal(_unquote(m.group(1))), _parse_ts_literal(_unquote(m.group(2)))
        return Predicate("ts", "between", (lo, hi))
    raise InvalidQueryError(f"unsupported predicate: {text!r}")


def _split_conjunction(text: str) -> list[str]:
    # split on AND; a BETWEEN predicate re-consumes the AND it owns
    tokens = re.split(r"(\s+AND\s+)", text, flags=re.IGNORECASE)
    parts: list[str] = []
    i = 0
    while i < len(tokens):
        piece = tokens[i]
        if re.fullmatch(r"\s+AND\s+", piece, re.IGNORECASE):
            i += 1
            continue
        if re.search(r"\bBETWEEN\b", piece, re.IGNORECASE) and i + 2 < len(tokens):
            piece = piece + tokens[i + 1] + tokens[i + 2]
            i += 3
        else:
            i += 1
        parts.append(piece)
    return [p for p in parts if p.strip()]


def parse_sql(sql: str) -> RestrictedQuery:
    """Parse generated SQL text into a RestrictedQuery, or raise InvalidQueryError."""
    text = sql.strip().rstrip(";").strip()
    # COUNT(*)
    m = re.fullmatch(
        rf"SELECT\s+COUNT\(\s*\*\s*\)\s+FROM\s+{TABLE_NAME}(?:\s+WHERE\s+(?P<where>.+?))?(?:\s+LIMIT\s+(?P<limit>\d+))?",
        text,
        re.IGNORECASE | re.DOTALL,
    )
    if m:
        q = RestrictedQuery(
            kind="count",
            where=_parse_where(m.group("where")),
            limit=int(m.group("limit")) if m.group("limit") else None,
        )
        q.validate()
        return q
    # GROUP BY (COUNT-GROUP-BY / TOP-K)
    m = re.fullmatch(
        rf"SELECT\s+(?P<col>\w+)\s*,\s*COUNT\(\s*\*\s*\)(?:\s+AS\s+\w+)?\s+FROM\s+{TABLE_NAME}"
        rf"(?:\s+WHERE\s+(?P<where>.+?))?"
        rf"\s+GROUP\s+BY\s+(?P<col2>\w+)"
        rf"(?:\s+ORDER\s+BY\s+(?:COUNT\(\s*\*\s*\)|\w+)(?:\s+DESC)?)?"
        rf"(?:\s+LIMIT\s+(?P<limit>\d+))?",
        text,
        re.IGNORECASE | re.DOTALL,
    )
    if m:
        column = m.group("col").lower()
        if column != m.group("col2").lower():
            raise InvalidQueryError("GROUP BY column must match selected column")
        limit = int(m.group("limit")) if m.group("limit") else None
        if limit is not None:
            q = RestrictedQuery(kind="top_k", column=column, k=limit, where=_parse_where(m.group("where")))
        else:
            q = RestrictedQuery(kind="group_count", column=column, where=_parse_where(m.group("where")))
        q.validate()
        return q
    # PERCENTAGE(pred)
    m = re.fullmatch(
        rf"SELECT\s+PERCENTAGE\(\s*(?P<pred>.+?)\s*\)\s+FROM\s+{TABLE_NAME}(?:\s+WHERE\s+(?P<where>.+?))?",
        text,
        re.IGNORECASE | re.DOTALL,
    )
    if m:
        q = RestrictedQuery(
            kind="percentage",
            pct_predicate=_parse_predicate(m.group("pred")),
            where=_parse_where(m.group("where")),
        )
        q.validate()
        return q
    raise InvalidQueryError(f"statement is not a restricted query: {sql!r}")


def _parse_where(text: Optional[str]) -> tuple[Predicate, ...]:
    if not text:
        return ()
    return tuple(_parse_predicate(part) for part in _split_conjunction(text))
