"""Log ingestion: normalizes raw lines into the unified record schema.

Each physical line becomes at most one record (blank lines are dropped).
Severity is extracted from level tokens and then post-processed by a
stack-trace heuristic: any line carrying an exception indicator is forced
to ERROR regardless of its literal level token.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from datetime import datetime, timezone
from enum import Enum
from typing import Iterable, Iterator, Optional

from .errors import IngestionError

UNKNOWN = "unknown"


class Severity(str, Enum):
    TRACE = "TRACE"
    DEBUG = "DEBUG"
    INFO = "INFO"
    WARN = "WARN"
    ERROR = "ERROR"
    FATAL = "FATAL"
    UNKNOWN = "UNKNOWN"


# Ranking used when a chunk must summarise the levels it contains.
SEVERITY_ORDER = {
    Severity.UNKNOWN: 0,
    Severity.TRACE: 1,
    Severity.DEBUG: 2,
    Severity.INFO: 3,
    Severity.WARN: 4,
    Severity.ERROR: 5,
    Severity.FATAL: 6,
}

# Word-boundary level tokens, first match in line order wins.
_LEVEL_TOKEN_RE = re.compile(
    r"\b(TRACE|DEBUG|INFO|WARNING|WARN|ERROR|ERR|FATAL|CRITICAL)\b", re.IGNORECASE
)

_TOKEN_TO_SEVERITY = {
    "TRACE": Severity.TRACE,
    "DEBUG": Severity.DEBUG,
    "INFO": Severity.INFO,
    "WARN": Severity.WARN,
    "WARNING": Severity.WARN,
    "ERROR": Severity.ERROR,
    "ERR": Severity.ERROR,
    "FATAL": Severity.FATAL,
    "CRITICAL": Severity.FATAL,
}

# Stack-frame lines like "    at com.foo.Bar.run(Bar.java:42)".
STACK_FRAME_RE = re.compile(r"^\s+at\s+[\w$.<>]+\s*\(")

# Exception indicators; configurable because different runtimes spell
# their traces differently. Defaults cover JVM and Python interpreters.
DEFAULT_EXCEPTION_INDICATORS = ("Exception", "Traceback")


@dataclass(frozen=True)
class SourceDescriptor:
    """Identifies where a log stream came from. Unset fields stay 'unknown'."""

    dataset: str
    namespace: str = UNKNOWN
    app: str = UNKNOWN
    pod: str = UNKNOWN
    container: str = UNKNOWN
    ts_format: Optional[str] = None

    def __post_init__(self):
        if not self.dataset:
            raise ValueError("SourceDescriptor.dataset must be non-empty")

    @property
    def source_key(self) -> str:
        return f"{self.namespace}/{self.app}/{self.pod}"


@dataclass(frozen=True)
class LogRecord:
    """One normalized log line in the unified schema."""

    ts: Optional[datetime]
    namespace: str
    app: str
    pod: str
    container: str
    level: Severity
    line: str

    def to_dict(self) -> dict:
        return {
            "ts": self.ts.isoformat() if self.ts else None,
            "namespace": self.namespace,
            "app": self.app,
            "pod": self.pod,
            "container": self.container,
            "level": self.level.value,
            "line": self.line,
        }


@dataclass
class IngestionReport:
    records: int = 0
    dropped: int = 0

    def to_dict(self) -> dict:
        return {"records": self.records, "dropped": self.dropped}


def detect_severity(line: str, indicators: tuple[str, ...] = DEFAULT_EXCEPTION_INDICATORS) -> Severity:
    """Extract a severity for `line`; exception-bearing lines are always ERROR."""
    if _has_exception_indicator(line, indicators):
        return Severity.ERROR
    m = _LEVEL_TOKEN_RE.search(line)
    if m:
        return _TOKEN_TO_SEVERITY[m.group(1).upper()]
    return Severity.UNKNOWN


def _has_exception_indicator(line: str, indicators: tuple[str, ...]) -> bool:
    if any(ind in line for ind in indicators):
        return True
    return bool(STACK_FRAME_RE.match(line))


# --- timestamp parsing -------------------------------------------------

# (regex, strptime format, has_year) tried in order when no per-source
# format is configured. Syslog timestamps carry no year; strptime then
# defaults to 1900, which is deterministic and sorts consistently.
_TS_PATTERNS: list[tuple[re.Pattern, str, bool]] = [
    (
        re.compile(r"\d{4}-\d{2}-\d{2}[T ]\d{2}:\d{2}:\d{2}(?:[.,]\d{1,6})?(?:Z|[+-]\d{2}:?\d{2})?"),
        "",  # handled by fromisoformat
        True,
    ),
    # bracketed Apache form must precede bare syslog: the latter matches
    # inside the bracket and would drop the year
    (
        re.compile(r"\[[A-Z][a-z]{2} [A-Z][a-z]{2} \d{2} \d{2}:\d{2}:\d{2}(?:\.\d+)? \d{4}\]"),
        "[%a %b %d %H:%M:%S %Y]",
        True,
    ),
    (
        re.compile(r"[A-Z][a-z]{2}\s+\d{1,2}\s+\d{2}:\d{2}:\d{2}"),
        "%b %d %H:%M:%S",
        False,
    ),
]

# strptime directive -> regex, for turning a per-source ts_format into a
# search pattern (strptime alone cannot locate a timestamp inside a line).
_DIRECTIVE_RE = {
    "%Y": r"\d{4}",
    "%y": r"\d{2}",
    "%m": r"\d{2}",
    "%d": r"\d{1,2}",
    "%H": r"\d{2}",
    "%M": r"\d{2}",
    "%S": r"\d{2}",
    "%f": r"\d{1,6}",
    "%b": r"[A-Z][a-z]{2}",
    "%a": r"[A-Z][a-z]{2}",
    "%z": r"[+-]\d{2}:?\d{2}",
    "%%": r"%",
}


def _format_to_regex(fmt: str) -> re.Pattern:
    out = []
    i = 0
    while i < len(fmt):
        if fmt[i] == "%" and i + 1 < len(fmt):
            directive = fmt[i : i + 2]
            out.append(_DIRECTIVE_RE.get(directive, re.escape(directive)))
            i += 2
        else:
            out.append(re.escape(fmt[i]))
            i += 1
    return re.compile("".join(out))


def _to_utc_ms(dt: datetime) -> datetime:
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    dt = dt.astimezone(timezone.utc)
    return dt.replace(microsecond=(dt.microsecond // 1000) * 1000)


def parse_timestamp(raw: str, ts_format: Optional[str] = None) -> Optional[datetime]:
    """Best-effort timestamp extraction; None when nothing parses."""
    head = raw[:64]
    if ts_format:
        m = _format_to_regex(ts_format).search(head)
        if m:
            try:
                return _to_utc_ms(datetime.strptime(m.group(0), ts_format))
            except ValueError:
                pass
    for pattern, fmt, _ in _TS_PATTERNS:
        m = pattern.search(head)
        if not m:
            continue
        text = m.group(0)
        try:
            if not fmt:
                return _to_utc_ms(datetime.fromisoformat(text.replace("Z", "+00:00").replace(",", ".")))
            return _to_utc_ms(datetime.strptime(re.sub(r"\s+", " ", text), fmt))
        except ValueError:
            continue
    return None


def normalize_line(raw: str, src: SourceDescriptor) -> Optional[LogRecord]:
    """Turn one physical line into a LogRecord; None for blank lines."""
    line = raw.rstrip("\r\n")
    if not line.strip():
        return None
    return LogRecord(
        ts=parse_timestamp(line, src.ts_format),
        namespace=src.namespace,
        app=src.app,
        pod=src.pod,
        container=src.container,
        level=detect_severity(line),
        line=line,
    )


def normalize_lines(lines: Iterable[str], src: SourceDescriptor) -> Iterator[LogRecord]:
    for raw in lines:
        rec = normalize_line(raw, src)
        if rec is not None:
            yield rec


def ingest_file(path, src: SourceDescriptor, sink=None) -> IngestionReport:
    """Stream `path` through normalize_line, feeding records to `sink`.

    `sink` is any callable taking one LogRecord; counts are exact:
    records + dropped == physical line count.
    """
    report = IngestionReport()
    try:
        fh = open(path, "r", encoding="utf-8", errors="replace")
    except OSError as exc:
        raise IngestionError(path, str(exc)) from exc
    with fh:
        for raw in fh:
            rec = normalize_line(raw, src)
            if rec is None:
                report.dropped += 1
                continue
            report.records += 1
            if sink is not None:
                sink(rec)
    return report
