"""End-to-end query execution across the four routed paths.

general  -> small generator, no retrieval context
keyword  -> exact/FTS lookup over raw lines; verbatim matches (+ optional
            one-line summary)
sql      -> template lookup -> coder-generated SQL -> restricted execution;
            the numeric result is the answer, never rewritten by a model
semantic -> hybrid retrieval -> complexity-scored tier -> generation

Every backend call is wrapped so failures degrade the response instead of
failing the request; each stage is timed and logged under a per-request
trace ID.
"""

from __future__ import annotations

import json
import os
import re
import threading
import time
import uuid
from dataclasses import dataclass, field, replace
from datetime import timedelta
from typing import Callable, Optional

import requests

from .chunker import chunk_records
from .drain import DrainMiner, Template
from .embedding import EmbeddingProviderConfig, make_provider
from .errors import (
    EmptyStoreError,
    GeneratorUnavailableError,
    InvalidConfigError,
    InvalidQueryError,
    ProviderUnavailableError,
    TermRejectedError,
)
from .indexes.keyword import KeywordIndex
from .indexes.rows import RowStore, execute_restricted, parse_sql, template_lookup
from .indexes.vector import VectorStore
from .ingest import IngestionReport, LogRecord, SourceDescriptor, normalize_line
from .retrieval import (
    DEFAULT_PER_BACKEND,
    DEFAULT_TOP_K,
    STRATEGIES,
    STRATEGY_HYBRID,
    Retriever,
)
from .router import (
    PATH_GENERAL,
    PATH_KEYWORD,
    PATH_SEMANTIC,
    PATH_SQL,
    TIER_LARGE,
    TIER_SMALL,
    L1Decision,
    L2Decision,
    RouterConfig,
    SignalVocabulary,
    route_l1,
    score_l2,
    validate_search_term,
)

GEN_URL_ENV = "LOGROUTER_GEN_URL"
GEN_TIMEOUT_ENV = "LOGROUTER_GEN_TIMEOUT_MS"

TIER_CODER = "coder"

PROMPT_VERSION = "1"

ANSWER_PROMPT = (
    "You are a log analysis assistant. Answer the question using only the "
    "numbered evidence blocks below. Cite line content verbatim where possible.\n\n"
    "{evidence}\n\nQuestion: {question}\nAnswer:"
)
SUMMARY_PROMPT = (
    "Summarize the following matched log lines in one short sentence.\n\n"
    "{evidence}\n\nQuery: {question}\nOne-line summary:"
)
SQL_PROMPT = (
    "You translate log questions into one SQL statement for the logs_raw table.\n"
    "Allowed forms: SELECT COUNT(*) | SELECT <col>, COUNT(*) ... GROUP BY <col> "
    "[ORDER BY COUNT(*) DESC] [LIMIT k] | SELECT PERCENTAGE(<col> = '<lit>').\n"
    "Allowed predicates: <col> = '<lit>', <col> LIKE '<pat>', ts BETWEEN '<iso>' AND '<iso>'.\n\n"
    "{evidence}\n\nQuestion: {question}\nSQL:"
)

ABLATION_CONDITIONS = (
    "full",
    "no_l1",
    "no_l2",
    "no_routing",
    "semantic_only",
    "keyword_only",
    "hybrid",
    "always_large",
    "no_drain",
)

# bounded in-flight generation per tier; the large tier runs exclusively
TIER_INFLIGHT_LIMITS = {TIER_SMALL: 4, TIER_LARGE: 1, TIER_CODER: 2}

UNAVAILABLE_MESSAGE = "service unavailable: {capability}"


@dataclass(frozen=True)
class GeneratorConfig:
    kind: str = "stub"  # "remote" | "stub"
    endpoint: Optional[str] = None
    small_model_tag: str = "small"
    large_model_tag: str = "large"
    coder_model_tag: str = "coder"
    timeout: float = 30.0

    def validate(self) -> None:
        if self.kind not in ("remote", "stub"):
            raise InvalidConfigError(f"unknown generator kind: {self.kind!r}")
        if self.kind == "remote":
            if not self.resolved_endpoint():
                raise InvalidConfigError("remote generator requires endpoint")
            if not (self.small_model_tag and self.large_model_tag and self.coder_model_tag):
                raise InvalidConfigError("remote generator requires all three model tags")

    def resolved_endpoint(self) -> Optional[str]:
        return os.environ.get(GEN_URL_ENV) or self.endpoint

    def resolved_timeout(self) -> float:
        raw = os.environ.get(GEN_TIMEOUT_ENV)
        if raw:
            return float(raw) / 1000.0
        return self.timeout

    def tag_for(self, tier: str) -> str:
        return {
            TIER_SMALL: self.small_model_tag,
            TIER_LARGE: self.large_model_tag,
            TIER_CODER: self.coder_model_tag,
        }[tier]


@dataclass
class StageTrace:
    trace_id: str
    stage: str
    started: float
    duration: float
    outcome: str  # "ok" | "error" | "degraded"

    def to_dict(self) -> dict:
        return {
            "trace_id": self.trace_id,
            "stage": self.stage,
            "started": self.started,
            "duration": self.duration,
            "outcome": self.outcome,
        }


class TraceLog:
    """Newline-delimited JSON trace sink; also retained in memory for inspection."""

    def __init__(self, path=None):
        self.path = path
        self.records: list[StageTrace] = []
        self._lock = threading.Lock()

    def emit(self, trace: StageTrace) -> None:
        with self._lock:
            self.records.append(trace)
            if self.path:
                with open(self.path, "a", encoding="utf-8") as fh:
                    fh.write(json.dumps(trace.to_dict(), sort_keys=True) + "\n")

    def stages_for(self, trace_id: str) -> set[str]:
        with self._lock:
            return {t.stage for t in self.records if t.trace_id == trace_id}


@dataclass
class EvidenceItem:
    ref: str
    text: str
    score: float

    def to_dict(self) -> dict:
        return {"ref": self.ref, "text": self.text, "score": self.score}


@dataclass
class QueryResponse:
    answer: str
    route: L1Decision
    l2: Optional[L2Decision]
    evidence: list
    sql_text: Optional[str]
    latencies: dict
    trace_id: str
    degraded: bool = False
    degraded_reason: Optional[str] = None

    def to_dict(self) -> dict:
        return {
            "answer": self.answer,
            "route": self.route.to_dict(),
            "l2": self.l2.to_dict() if self.l2 else None,
            "evidence": [e.to_dict() for e in self.evidence],
            "sql_text": self.sql_text,
            "latencies": dict(self.latencies),
            "trace_id": self.trace_id,
            "degraded": self.degraded,
            "degraded_reason": self.degraded_reason,
        }


@dataclass(frozen=True)
class PipelineOptions:
    """Per-request execution knobs; ablations produce a transformed copy."""

    condition: str = "full"
    force_path: Optional[str] = None
    force_tier: Optional[str] = None
    strategy: Optional[str] = None
    hide_catalogue: bool = False


def apply_ablation(condition: str, options: Optional[PipelineOptions] = None) -> PipelineOptions:
    """Translate an ablation condition name into pipeline overrides."""
    base = options or PipelineOptions()
    name = (condition or "full").strip().lower().replace("-", "_")
    if name not in ABLATION_CONDITIONS:
        raise InvalidConfigError(f"unknown ablation condition: {condition!r}")
    overrides = {
        "full": {},
        "no_l1": {"force_path": PATH_SEMANTIC},
        "no_l2": {"force_tier": TIER_SMALL},
        "no_routing": {"force_path": PATH_SEMANTIC, "force_tier": TIER_SMALL},
        "semantic_only": {"force_path": PATH_SEMANTIC},
        "keyword_only": {"force_path": PATH_KEYWORD},
        "hybrid": {"strategy": STRATEGY_HYBRID},
        "always_large": {"force_tier": TIER_LARGE},
        "no_drain": {"hide_catalogue": True},
    }[name]
    return replace(base, condition=name, **overrides)


# --- generators ---------------------------------------------------------


class StubGenerator:
    """Deterministic offline stand-in for the model endpoints."""

    kind = "stub"

    def __init__(self, cfg: GeneratorConfig):
        self.cfg = cfg

    def generate(self, context: list, question: str, tier: str, purpose: str = "answer") -> str:
        if purpose == "summary":
            return f"MATCHES: {len(context)}"
        if purpose == "sql":
            return stub_sql(context, question)
        words = re.findall(r"[a-z0-9]+", question.lower())[:6]
        return f"STUB[{tier}] evidence={len(context)} q={' '.join(words)}"


class RemoteGenerator:
    """Client for a local-inference generation endpoint (POST /api/generate)."""

    kind = "remote"

    def __init__(self, cfg: GeneratorConfig):
        cfg.validate()
        self.cfg = cfg
        self.endpoint = cfg.resolved_endpoint().rstrip("/")
        self._gates = {tier: threading.Semaphore(n) for tier, n in TIER_INFLIGHT_LIMITS.items()}

    def generate(self, context: list, question: str, tier: str, purpose: str = "answer") -> str:
        template = {"answer": ANSWER_PROMPT, "summary": SUMMARY_PROMPT, "sql": SQL_PROMPT}[purpose]
        evidence = "\n".join(f"[{i + 1}] {text}" for i, text in enumerate(context))
        prompt = template.format(evidence=evidence, question=question)
        gate = self._gates[tier]
        with gate:
            try:
                resp = requests.post(
                    f"{self.endpoint}/api/generate",
                    json={"model": self.cfg.tag_for(tier), "prompt": prompt, "stream": False},
                    timeout=self.cfg.resolved_timeout(),
                )
                resp.raise_for_status()
                payload = resp.json()
            except (requests.RequestException, ValueError) as exc:
                raise GeneratorUnavailableError(f"generator endpoint failed: {exc}") from exc
        answer = payload.get("response")
        if not isinstance(answer, str):
            raise GeneratorUnavailableError("generator response missing 'response' field")
        return answer


def make_generator(cfg: GeneratorConfig):
    cfg.validate()
    return RemoteGenerator(cfg) if cfg.kind == "remote" else StubGenerator(cfg)


def generate(context: list, question: str, tier: str, cfg: GeneratorConfig, purpose: str = "answer") -> str:
    """One-shot generation against `cfg` (remote or stub)."""
    return make_generator(cfg).generate(context, question, tier, purpose=purpose)


# --- stub SQL coder ------------------------------------------------------

_SEVERITY_TOKEN_RE = re.compile(r"\b(TRACE|DEBUG|INFO|WARNING|WARN|ERROR|ERR|FATAL|CRITICAL)\b")
_TOPK_RE = re.compile(r"\btop\s+(\d+|three|five|ten|twenty)\b", re.IGNORECASE)
_GROUP_COL_RE = re.compile(
    r"\b(?:per|by|for)\s+(?:each\s+)?(namespace|app(?:lication)?|pod|container|level|severity|template)s?\b",
    re.IGNORECASE,
)
_TOPK_COL_RE = re.compile(
    r"\btop\s+(?:\d+|three|five|ten|twenty)\s+(namespace|app(?:lication)?|pod|container|level|severitie|template)s?\b",
    re.IGNORECASE,
)
_LAST_WINDOW_RE = re.compile(r"\blast\s+(\d+)?\s*(hour|minute|min|day|week)s?\b", re.IGNORECASE)
_SCHEMA_TS_MAX_RE = re.compile(r"ts_max=(\S+)")

_WORD_NUMBERS = {"three": 3, "five": 5, "ten": 10, "twenty": 20}
_COLUMN_ALIASES = {
    "app": "app",
    "application": "app",
    "pod": "pod",
    "namespace": "namespace",
    "container": "container",
    "level": "level",
    "severity": "level",
    "severitie": "level",
    "template": "template_id",
}

_SEVERITY_CANONICAL = {
    "TRACE": "TRACE", "DEBUG": "DEBUG", "INFO": "INFO", "WARN": "WARN",
    "WARNING": "WARN", "ERROR": "ERROR", "ERR": "ERROR", "FATAL": "FATAL",
    "CRITICAL": "FATAL",
}

_WINDOW_SECONDS = {"hour": 3600, "minute": 60, "min": 60, "day": 86400, "week": 604800}


def _stub_where(question: str, context: list) -> list[str]:
    preds = []
    m = _SEVERITY_TOKEN_RE.search(question)
    if m:
        preds.append(f"level = '{_SEVERITY_CANONICAL[m.group(1)]}'")
    quoted = re.search(r"\"([^\"]+)\"|'([^']+)'", question)
    if quoted:
        literal = (quoted.group(1) or quoted.group(2)).replace("'", "''")
        preds.append(f"line LIKE '%{literal}%'")
    window = _LAST_WINDOW_RE.search(question)
    if window:
        ts_max = None
        for line in context:
            sm = _SCHEMA_TS_MAX_RE.search(str(line))
            if sm and sm.group(1) != "none":
                ts_max = sm.group(1)
                break
        if ts_max:
            from datetime import datetime

            hi = datetime.fromisoformat(ts_max)
            count = int(window.group(1) or 1)
            lo = hi - timedelta(seconds=count * _WINDOW_SECONDS[window.group(2).lower()])
            preds.append(f"ts BETWEEN '{lo.isoformat()}' AND '{hi.isoformat()}'")
    return preds


def stub_sql(context: list, question: str) -> str:
    """Deterministic SQL from a rule table keyed on the matched sql-signal shape."""
    where = _stub_where(question, context)
    where_sql = f" WHERE {' AND '.join(where)}" if where else ""
    topk = _TOPK_RE.search(question)
    if topk:
        raw_k = topk.group(1).lower()
        k = _WORD_NUMBERS.get(raw_k, None) or (int(raw_k) if raw_k.isdigit() else 5)
        col_m = _TOPK_COL_RE.search(question) or _GROUP_COL_RE.search(question)
        column = _COLUMN_ALIASES[col_m.group(1).lower()] if col_m else "template_id"
        return (
            f"SELECT {column}, COUNT(*) FROM logs_raw{where_sql} "
            f"GROUP BY {column} ORDER BY COUNT(*) DESC LIMIT {k}"
        )
    group = _GROUP_COL_RE.search(question)
    if group:
        column = _COLUMN_ALIASES[group.group(1).lower()]
        return (
            f"SELECT {column}, COUNT(*) FROM logs_raw{where_sql} "
            f"GROUP BY {column} ORDER BY COUNT(*) DESC"
        )
    if re.search(r"\bpercent(?:age)?\b|\bproportion\b|\bfraction\s+of\b|\bshare\s+of\b", question, re.IGNORECASE):
        m = _SEVERITY_TOKEN_RE.search(question)
        level = _SEVERITY_CANONICAL[m.group(1)] if m else "ERROR"
        # the severity predicate moves into the numerator for percentages
        remaining = [p for p in where if not p.startswith("level = ")]
        where_sql = f" WHERE {' AND '.join(remaining)}" if remaining else ""
        return f"SELECT PERCENTAGE(level = '{level}') FROM logs_raw{where_sql}"
    return f"SELECT COUNT(*) FROM logs_raw{where_sql}"


# --- engine ---------------------------------------------------------------


class _StageTimer:
    def __init__(self, clock: Callable[[], float], trace_log: TraceLog, trace_id: str):
        self.clock = clock
        self.trace_log = trace_log
        self.trace_id = trace_id
        self.latencies: dict[str, float] = {}

    def stage(self, name: str):
        timer = self

        class _Ctx:
            def __enter__(ctx):
                ctx.started = timer.clock()
                ctx.outcome = "ok"
                return ctx

            def __exit__(ctx, exc_type, exc, tb):
                duration = timer.clock() - ctx.started
                timer.latencies[name] = duration
                if exc_type is not None and ctx.outcome == "ok":
                    ctx.outcome = "error"
                timer.trace_log.emit(
                    StageTrace(
                        trace_id=timer.trace_id,
                        stage=name,
                        started=ctx.started,
                        duration=duration,
                        outcome=ctx.outcome,
                    )
                )
                return False

        return _Ctx()


class Engine:
    """Holds the indexes, miner, providers, and routing config for one corpus."""

    def __init__(
        self,
        vocab: Optional[SignalVocabulary] = None,
        router_cfg: Optional[RouterConfig] = None,
        embed_cfg: Optional[EmbeddingProviderConfig] = None,
        gen_cfg: Optional[GeneratorConfig] = None,
        miner: Optional[DrainMiner] = None,
        chunk_window: int = 25,
        chunk_overlap: int = 3,
        top_k: int = DEFAULT_TOP_K,
        per_backend: int = DEFAULT_PER_BACKEND,
        keyword_top_n: int = 20,
        keyword_summary: bool = True,
        default_options: Optional[PipelineOptions] = None,
        trace_path=None,
        clock: Optional[Callable[[], float]] = None,
        trace_id_factory: Optional[Callable[[], str]] = None,
    ):
        self.vocab = vocab or SignalVocabulary.default()
        self.router_cfg = router_cfg or RouterConfig()
        self.router_cfg.validate()
        self.embed_cfg = embed_cfg or EmbeddingProviderConfig()
        self.provider = make_provider(self.embed_cfg)
        self.gen_cfg = gen_cfg or GeneratorConfig()
        self.generator = make_generator(self.gen_cfg)
        self.miner = miner or DrainMiner()
        self.chunk_window = chunk_window
        self.chunk_overlap = chunk_overlap
        self.top_k = top_k
        self.per_backend = per_backend
        self.keyword_top_n = keyword_top_n
        self.keyword_summary = keyword_summary
        self.default_options = default_options or PipelineOptions()

        self.raw_lines = KeywordIndex()
        self.chunk_fts = KeywordIndex()
        self.vector_store = VectorStore(dim=self.provider.dim)
        self.row_store = RowStore()
        self.retriever = Retriever(self.vector_store, self.chunk_fts, self.provider)
        self.trace_log = TraceLog(trace_path)
        self.clock = clock or time.perf_counter
        self.trace_id_factory = trace_id_factory or (lambda: str(uuid.uuid4()))

        self._write_lock = threading.Lock()
        self._line_offsets: dict[tuple, int] = {}

    # --- ingestion -------------------------------------------------------

    def ingest_lines(self, lines, src: SourceDescriptor) -> tuple[IngestionReport, list[str]]:
        """Normalize, mine, index, chunk, and embed one batch from one source."""
        report = IngestionReport()
        records: list[LogRecord] = []
        for raw in lines:
            rec = normalize_line(raw, src)
            if rec is None:
                report.dropped += 1
            else:
                report.records += 1
                records.append(rec)
        warnings: list[str] = []
        if not records:
            return report, warnings
        dataset, source_key = src.dataset, src.source_key
        with self._write_lock:
            if not self.miner.frozen:
                self.miner.train(records)
            annotated = self.miner.annotate(records)
            offset = self._line_offsets.get((dataset, source_key), 0)
            for i, ann in enumerate(annotated):
                line_no = offset + i
                self.row_store.add_annotated(ann.record, ann.template_id, dataset, source_key, line_no)
                self.raw_lines.add((dataset, source_key, line_no), ann.record.line)
            chunks = chunk_records(
                records, dataset, source_key,
                window=self.chunk_window, overlap=self.chunk_overlap,
                start_offset=offset,
            )
            for chunk in chunks:
                self.chunk_fts.add(chunk.chunk_id, chunk.text)
            try:
                vectors = self.provider.embed_batch([c.text for c in chunks])
                for chunk, vector in zip(chunks, vectors):
                    self.vector_store.add(chunk, vector)
            except ProviderUnavailableError as exc:
                warnings.append(f"embedding skipped: {exc}")
            self._line_offsets[(dataset, source_key)] = offset + len(records)
        return report, warnings

    def ingest_file(self, path, src: SourceDescriptor) -> tuple[IngestionReport, list[str]]:
        try:
            fh = open(path, "r", encoding="utf-8", errors="replace")
        except OSError as exc:
            from .errors import IngestionError

            raise IngestionError(path, str(exc)) from exc
        with fh:
            return self.ingest_lines(fh, src)

    # --- snapshots ---------------------------------------------------------

    def save_snapshot(self, directory) -> None:
        os.makedirs(directory, exist_ok=True)
        self.row_store.save(os.path.join(directory, "rows.ndjson"))
        self.vector_store.save(os.path.join(directory, "vectors.bin"))
        self.miner.save(os.path.join(directory, "drain_state.json"))

    def load_snapshot(self, directory) -> None:
        """Replace in-memory state with the snapshot contents."""
        rows_path = os.path.join(directory, "rows.ndjson")
        vectors_path = os.path.join(directory, "vectors.bin")
        drain_path = os.path.join(directory, "drain_state.json")
        with self._write_lock:
            if os.path.exists(drain_path):
                self.miner = DrainMiner.load(drain_path)
            if os.path.exists(rows_path):
                self.row_store = RowStore.load(rows_path)
                self.raw_lines = KeywordIndex()
                self._line_offsets = {}
                for row in self.row_store.rows:
                    key = (row.dataset, row.source_key)
                    self.raw_lines.add((row.dataset, row.source_key, row.line_no), row.line)
                    self._line_offsets[key] = max(self._line_offsets.get(key, 0), row.line_no + 1)
            if os.path.exists(vectors_path):
                store = VectorStore.load(vectors_path)
                if store.dim != self.provider.dim:
                    raise InvalidConfigError(
                        f"vector snapshot dim {store.dim} != provider dim {self.provider.dim}"
                    )
                self.vector_store = store
                self.chunk_fts = KeywordIndex()
                for cid in store.chunk_ids():
                    self.chunk_fts.add(cid, store.chunk(cid).text)
            self.retriever = Retriever(self.vector_store, self.chunk_fts, self.provider)

    # --- introspection -----------------------------------------------------

    def catalogue(self) -> dict[str, Template]:
        return self.miner.catalogue_by_id()

    def counts(self) -> dict:
        return {
            "raw_lines": len(self.raw_lines),
            "chunks": len(self.chunk_fts),
            "vectors": len(self.vector_store),
            "rows": len(self.row_store),
            "templates": len(self.miner.clusters),
        }

    def explain(self, question: str, options: Optional[PipelineOptions] = None) -> tuple[L1Decision, L2Decision]:
        """Route introspection without execution; side-effect-free."""
        options = options or self.default_options
        decision = self._route(question, options)
        l2 = score_l2(question, self.router_cfg, self.vocab)
        if options.force_tier:
            l2.tier = options.force_tier
        return decision, l2

    # --- routing ------------------------------------------------------------

    def _route(self, question: str, options: PipelineOptions) -> L1Decision:
        try:
            decision = route_l1(question, self.vocab, self.router_cfg)
        except TermRejectedError as exc:
            decision = exc.decision or L1Decision(path=PATH_SEMANTIC)
        if options.force_path:
            decision.path = options.force_path
        if options.hide_catalogue and decision.path in (PATH_KEYWORD, PATH_SQL):
            # without template-derived context the router falls back to semantic
            decision.path = PATH_SEMANTIC
            decision.extracted_search_term = None
        if decision.path == PATH_KEYWORD and not decision.extracted_search_term:
            term = self._fallback_term(question)
            if term and validate_search_term(term):
                decision.extracted_search_term = term
            elif options.force_path == PATH_KEYWORD:
                decision.extracted_search_term = self._sanitize_term(question)
            else:
                decision.path = PATH_SEMANTIC
        return decision

    @staticmethod
    def _fallback_term(question: str) -> Optional[str]:
        from .router import _STOPWORDS, _words

        content = [w for w in _words(question) if w not in _STOPWORDS]
        return " ".join(content) if content else None

    @staticmethod
    def _sanitize_term(question: str) -> str:
        cleaned = re.sub(r"[^A-Za-z0-9 ._:/-]+", " ", question)
        cleaned = re.sub(r"--|/\*", " ", cleaned)
        cleaned = " ".join(cleaned.split())
        return cleaned or "log"

    # --- query execution ------------------------------------------------------

    def answer_query(
        self,
        question: str,
        strategy: Optional[str] = None,
        ablation: Optional[str] = None,
        dataset: Optional[str] = None,
    ) -> QueryResponse:
        if not question or not question.strip():
            raise ValueError("question must be non-empty")
        options = self.default_options
        if ablation is not None:
            options = apply_ablation(ablation, options)
        if strategy is not None:
            if strategy not in STRATEGIES:
                raise InvalidConfigError(f"unknown retrieval strategy: {strategy!r}")
            options = replace(options, strategy=strategy)

        trace_id = self.trace_id_factory()
        timer = _StageTimer(self.clock, self.trace_log, trace_id)
        total_start = self.clock()

        with timer.stage("l1_route"):
            decision = self._route(question, options)

        if decision.path == PATH_GENERAL:
            response = self._run_general(question, decision, timer)
        elif decision.path == PATH_KEYWORD:
            response = self._run_keyword(question, decision, timer, dataset)
        elif decision.path == PATH_SQL:
            response = self._run_sql(question, decision, timer, options)
        else:
            response = self._run_semantic(question, decision, timer, options, dataset)

        total = self.clock() - total_start
        timer.latencies["total"] = total
        self.trace_log.emit(
            StageTrace(trace_id=trace_id, stage="total", started=total_start, duration=total, outcome="ok")
        )
        response.latencies = timer.latencies
        response.trace_id = trace_id
        return response

    def _run_general(self, question: str, decision: L1Decision, timer) -> QueryResponse:
        response = QueryResponse(
            answer="", route=decision, l2=None, evidence=[], sql_text=None,
            latencies={}, trace_id="",
        )
        with timer.stage("llm_generate") as ctx:
            try:
                response.answer = self.generator.generate([], question, TIER_SMALL, purpose="answer")
            except GeneratorUnavailableError as exc:
                ctx.outcome = "degraded"
                response.answer = UNAVAILABLE_MESSAGE.format(capability="generator")
                response.degraded = True
                response.degraded_reason = str(exc)
        return response

    def _run_keyword(self, question: str, decision: L1Decision, timer, dataset: Optional[str]) -> QueryResponse:
        term = decision.extracted_search_term or ""
        doc_filter = (lambda ref: ref[0] == dataset) if dataset else None
        response = QueryResponse(
            answer="", route=decision, l2=None, evidence=[], sql_text=None,
            latencies={}, trace_id="",
        )
        with timer.stage("keyword_search"):
            refs = self.raw_lines.regex_search(
                re.escape(term), self.keyword_top_n, flags=re.IGNORECASE, doc_filter=doc_filter
            )
            if refs:
                scored = [(ref, 1.0) for ref in refs]
            else:
                scored = self.raw_lines.search(term, top_n=self.keyword_top_n, doc_filter=doc_filter)
            for ref, score in scored:
                text = self.raw_lines.text_of(ref) or ""
                response.evidence.append(EvidenceItem(ref=_ref_str(ref), text=text, score=score))
        lines = [e.text for e in response.evidence]
        response.answer = "\n".join(lines) if lines else "no matching lines"
        if self.keyword_summary and lines:
            with timer.stage("llm_generate") as ctx:
                try:
                    summary = self.generator.generate(lines, question, TIER_SMALL, purpose="summary")
                    response.answer = response.answer + "\n" + summary
                except GeneratorUnavailableError as exc:
                    ctx.outcome = "degraded"
                    response.degraded = True
                    response.degraded_reason = str(exc)
                    response.answer = response.answer + "\n" + UNAVAILABLE_MESSAGE.format(capability="summary")
        return response

    def _run_sql(self, question: str, decision: L1Decision, timer, options: PipelineOptions) -> QueryResponse:
        response = QueryResponse(
            answer="", route=decision, l2=None, evidence=[], sql_text=None,
            latencies={}, trace_id="",
        )
        catalogue = {} if options.hide_catalogue else self.catalogue()
        query = None
        with timer.stage("sql_generate") as ctx:
            templates = self._sql_templates(question, catalogue)
            response.evidence = [
                EvidenceItem(ref=t.template_id, text=t.template_string, score=float(t.match_count))
                for t in templates
            ]
            schema = self._schema_description()
            context = [schema] + [t.template_string for t in templates]
            try:
                sql_text = self.generator.generate(context, question, TIER_CODER, purpose="sql")
                response.sql_text = sql_text
                try:
                    query = parse_sql(sql_text)
                except InvalidQueryError as first_err:
                    retry_q = f"{question}\n-- previous attempt failed: {first_err}"
                    sql_text = self.generator.generate(context, retry_q, TIER_CODER, purpose="sql")
                    response.sql_text = sql_text
                    query = parse_sql(sql_text)
            except (GeneratorUnavailableError, InvalidQueryError) as exc:
                ctx.outcome = "degraded"
                response.degraded = True
                response.degraded_reason = str(exc)
                response.answer = UNAVAILABLE_MESSAGE.format(capability="sql")
                return response
        with timer.stage("sql_execute") as ctx:
            try:
                result = execute_restricted(query, self.row_store)
            except (EmptyStoreError, InvalidQueryError) as exc:
                ctx.outcome = "degraded"
                response.degraded = True
                response.degraded_reason = str(exc)
                response.answer = UNAVAILABLE_MESSAGE.format(capability="sql")
                return response
        response.answer = render_sql_result(result)
        return response

    def _sql_templates(self, question: str, catalogue: dict) -> list[Template]:
        pattern = _content_word_pattern(question)
        templates: list[Template] = []
        if pattern and catalogue:
            templates = template_lookup(pattern, catalogue, self.row_store)
        if not templates and catalogue:
            # fall back to vector metadata search, collecting templates of
            # the rows inside the returned chunks
            try:
                query_vec = self.provider.embed(question)
                hits = self.vector_store.search(query_vec, top_n=self.top_k)
            except ProviderUnavailableError:
                hits = []
            seen: dict[str, Template] = {}
            for chunk_id, _ in hits:
                chunk = self.vector_store.chunk(chunk_id)
                if chunk is None:
                    continue
                for row in self.row_store.rows_in_span(
                    chunk.dataset, chunk.source_key, chunk.start_line, chunk.line_count
                ):
                    if row.template_id in catalogue and row.template_id not in seen:
                        seen[row.template_id] = catalogue[row.template_id]
            templates = sorted(seen.values(), key=lambda t: (-t.match_count, t.template_id))
        return templates[:10]

    def _schema_description(self) -> str:
        ts_range = self.row_store.ts_range()
        ts_min = ts_range[0].isoformat() if ts_range else "none"
        ts_max = ts_range[1].isoformat() if ts_range else "none"
        return (
            "table logs_raw(ts, namespace, app, pod, container, level, line, template_id) "
            f"rows={len(self.row_store)} ts_min={ts_min} ts_max={ts_max}"
        )

    def _run_semantic(
        self,
        question: str,
        decision: L1Decision,
        timer,
        options: PipelineOptions,
        dataset: Optional[str],
    ) -> QueryResponse:
        response = QueryResponse(
            answer="", route=decision, l2=None, evidence=[], sql_text=None,
            latencies={}, trace_id="",
        )
        strategy = options.strategy or STRATEGY_HYBRID
        filters = {"dataset": dataset} if dataset else None
        with timer.stage("semantic_search") as ctx:
            result = self.retriever.retrieve(
                question,
                strategy=strategy,
                top_k=self.top_k,
                per_backend=self.per_backend,
                filters=filters,
            )
            if result.degraded_reason:
                ctx.outcome = "degraded"
                response.degraded = True
                response.degraded_reason = result.degraded_reason
            response.evidence = [
                EvidenceItem(ref=chunk.chunk_id, text=chunk.text, score=score)
                for chunk, score in result.chunks
            ]
        with timer.stage("l2_route"):
            l2 = score_l2(question, self.router_cfg, self.vocab)
            if options.force_tier:
                l2.tier = options.force_tier
            response.l2 = l2
        with timer.stage("llm_generate") as ctx:
            try:
                context = [chunk.text for chunk, _ in result.chunks]
                response.answer = self.generator.generate(context, question, l2.tier, purpose="answer")
            except GeneratorUnavailableError as exc:
                ctx.outcome = "degraded"
                response.degraded = True
                response.degraded_reason = str(exc)
                response.answer = UNAVAILABLE_MESSAGE.format(capability="generator")
        return response


def _ref_str(ref) -> str:
    if isinstance(ref, tuple):
        return ":".join(str(part) for part in ref)
    return str(ref)


_CONTENT_STOP = frozenset(
    "how many what which where when why is are was were do does did the a an "
    "of in on at to for and or events event occurred happen happened logs log "
    "lines line show me all last hour day week month minute".split()
)


def _content_word_pattern(question: str) -> str:
    words = [w for w in re.findall(r"[A-Za-z0-9_.-]+", question.lower()) if w not in _CONTENT_STOP]
    if not words:
        return ""
    return "|".join(re.escape(w) for w in dict.fromkeys(words))


def render_sql_result(result) -> str:
    """Verbatim rendering of a restricted-query result."""
    if isinstance(result, int):
        return str(result)
    if isinstance(result, float):
        return f"{result:.2f}"
    return "\n".join(f"{group}: {count}" for group, count in result)
