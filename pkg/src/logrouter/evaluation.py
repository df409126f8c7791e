"""Evaluation harness: replays labeled question sets through the pipeline
under any ablation condition and computes the metric suite: routing
accuracy with per-class precision/recall/F1 and confusion matrix, answer
cosine similarity and ROUGE-1 F1, retrieval Hit@k / Recall@k / MRR, and
per-stage latency statistics.

Two modes: online runs against the engine's populated indexes; offline
injects each question's dataset file as chunks directly, isolating the
generator and router from retrieval-system state. Model-judged metrics
(BERTScore, RAGAS, answer correctness) need external models; the report
reserves named null slots for them.
"""

from __future__ import annotations

import json
import os
import random
import re
import uuid
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .chunker import chunk_records
from .embedding import cosine
from .errors import InvalidConfigError
from .indexes.keyword import KeywordIndex
from .indexes.vector import VectorStore
from .ingest import SourceDescriptor, normalize_line
from .orchestrator import Engine, PipelineOptions, apply_ablation
from .retrieval import Retriever
from .router import PATH_SEMANTIC, score_l2

ROUTE_LABELS = ("keyword", "semantic", "sql")

_TOKEN_RE = re.compile(r"[a-z0-9]+")


@dataclass(frozen=True)
class QuestionRecord:
    id: str
    dataset: str
    question: str
    gold_route: str
    reference_answer: str
    reference_text: Optional[str] = None

    def __post_init__(self):
        if self.gold_route not in ROUTE_LABELS:
            raise InvalidConfigError(
                f"question {self.id!r}: gold_route must be one of {ROUTE_LABELS}, got {self.gold_route!r}"
            )


def load_questions(path) -> list[QuestionRecord]:
    records = []
    seen = set()
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            data = json.loads(line)
            rec = QuestionRecord(
                id=data["id"],
                dataset=data.get("dataset", "unknown"),
                question=data["question"],
                gold_route=data["gold_route"],
                reference_answer=data.get("reference_answer", ""),
                reference_text=data.get("reference_text"),
            )
            if rec.id in seen:
                raise InvalidConfigError(f"duplicate question id: {rec.id!r}")
            seen.add(rec.id)
            records.append(rec)
    return records


# --- metric primitives ----------------------------------------------------


def rouge1_f1(candidate: str, reference: str) -> float:
    """Unigram-overlap F1 with multiset overlap; 0 when either side is empty."""
    cand = _TOKEN_RE.findall(candidate.lower())
    ref = _TOKEN_RE.findall(reference.lower())
    if not cand or not ref:
        return 0.0
    cand_counts, ref_counts = Counter(cand), Counter(ref)
    overlap = sum(min(cand_counts[t], ref_counts[t]) for t in cand_counts)
    if overlap == 0:
        return 0.0
    precision = overlap / len(cand)
    recall = overlap / len(ref)
    return 2 * precision * recall / (precision + recall)


def routing_metrics(gold: Sequence[str], predicted: Sequence[str]) -> dict:
    """Accuracy, per-class P/R/F1 + support, and the confusion matrix."""
    if len(gold) != len(predicted):
        raise InvalidConfigError(
            f"gold/predicted length mismatch: {len(gold)} != {len(predicted)}"
        )
    n = len(gold)
    confusion: dict[str, dict[str, int]] = defaultdict(lambda: defaultdict(int))
    for g, p in zip(gold, predicted):
        confusion[g][p] += 1
    labels = list(ROUTE_LABELS)
    for extra in sorted({*gold, *predicted} - set(labels)):
        labels.append(extra)
    per_class = {}
    correct = 0
    for label in labels:
        tp = confusion[label][label]
        support = sum(confusion[label].values())
        predicted_as = sum(confusion[g][label] for g in labels)
        precision = tp / predicted_as if predicted_as else 0.0
        recall = tp / support if support else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        per_class[label] = {
            "precision": precision,
            "recall": recall,
            "f1": f1,
            "support": support,
        }
        correct += tp
    return {
        "accuracy": correct / n if n else 0.0,
        "per_class": per_class,
        "confusion": {g: {p: confusion[g][p] for p in labels} for g in labels},
        "n": n,
    }


def retrieval_metrics(
    results: Sequence[Sequence[str]],
    references: Sequence[Optional[str]],
    corpora: Optional[Sequence[Sequence[str]]] = None,
    k: int = 10,
) -> dict:
    """Hit@k / Recall@k / MRR over ranked chunk-text lists.

    Only questions with a reference_text contribute. Hit@k is 1 iff any
    top-k chunk contains the reference as a substring; Recall@k divides
    retrieved reference-bearing chunks by their total count in the
    question's corpus (0 when the corpus holds none); MRR uses the first
    reference-bearing rank.
    """
    hits, recalls, rranks = [], [], []
    for i, reference in enumerate(references):
        if not reference:
            continue
        ranked = list(results[i])[:k]
        bearing_ranks = [r + 1 for r, text in enumerate(ranked) if reference in text]
        hits.append(1.0 if bearing_ranks else 0.0)
        rranks.append(1.0 / bearing_ranks[0] if bearing_ranks else 0.0)
        if corpora is not None:
            total = sum(1 for text in corpora[i] if reference in text)
            recalls.append(len(bearing_ranks) / total if total else 0.0)
        else:
            recalls.append(1.0 if bearing_ranks else 0.0)
    n = len(hits)
    return {
        "hit_at_k": sum(hits) / n if n else 0.0,
        "recall_at_k": sum(recalls) / n if n else 0.0,
        "mrr": sum(rranks) / n if n else 0.0,
        "k": k,
        "n": n,
    }


def cosine_answer_similarity(candidate: str, reference: str, provider) -> Optional[float]:
    """Cosine of provider embeddings; None (metric absent) when a side is empty."""
    if not candidate.strip() or not reference.strip():
        return None
    a = provider.embed(candidate)
    b = provider.embed(reference)
    return cosine(a.values, b.values)


# --- determinism helpers ----------------------------------------------------


class TickClock:
    """Monotonic fake clock: every reading advances one fixed tick."""

    def __init__(self, step: float = 0.001):
        self.step = step
        self._ticks = 0

    def __call__(self) -> float:
        self._ticks += 1
        return self._ticks * self.step


def seeded_trace_factory(seed: int):
    rng = random.Random(seed)

    def make() -> str:
        return str(uuid.UUID(bytes=rng.randbytes(16), version=4))

    return make


# --- report -------------------------------------------------------------


@dataclass
class MetricsReport:
    condition: str
    mode: str
    n: int
    routing: dict
    answer: dict
    retrieval: dict
    latency: dict
    errors: int = 0
    extensions: dict = field(
        default_factory=lambda: {
            "bertscore": None,
            "ragas_faithfulness": None,
            "ragas_context_precision": None,
            "answer_correctness": None,
        }
    )

    def to_dict(self) -> dict:
        return {
            "condition": self.condition,
            "mode": self.mode,
            "n": self.n,
            "errors": self.errors,
            "routing": self.routing,
            "answer": self.answer,
            "retrieval": self.retrieval,
            "latency": self.latency,
            "extensions": self.extensions,
        }

    def to_markdown(self) -> str:
        lines = [
            f"# Evaluation report: condition `{self.condition}` ({self.mode}, n={self.n})",
            "",
            "## Per-class routing",
            "",
            "| Class | Supp. | Prec. | Rec. | F1 |",
            "|---|---|---|---|---|",
        ]
        for label in ROUTE_LABELS:
            stats = self.routing["per_class"].get(label, {})
            lines.append(
                f"| {label} | {stats.get('support', 0)} | {stats.get('precision', 0.0):.3f} "
                f"| {stats.get('recall', 0.0):.3f} | {stats.get('f1', 0.0):.3f} |"
            )
        lines += [
            "",
            "## Summary",
            "",
            "| Metric | Value |",
            "|---|---|",
            f"| Routing accuracy | {self.routing['accuracy']:.3f} |",
            f"| Mean cosine | {_fmt(self.answer.get('mean_cosine'))} |",
            f"| Mean ROUGE-1 F1 | {_fmt(self.answer.get('mean_rouge1_f1'))} |",
            f"| Hit@{self.retrieval['k']} | {self.retrieval['hit_at_k']:.3f} |",
            f"| Recall@{self.retrieval['k']} | {self.retrieval['recall_at_k']:.3f} |",
            f"| MRR | {self.retrieval['mrr']:.3f} |",
            f"| Mean total latency (s) | {_fmt(self.latency.get('mean', {}).get('total'))} |",
            "",
        ]
        return "\n".join(lines)


def _fmt(value) -> str:
    return f"{value:.3f}" if isinstance(value, (int, float)) else "n/a"


def _percentile(values: list[float], q: float) -> float:
    ordered = sorted(values)
    idx = max(0, min(len(ordered) - 1, int(round(q * (len(ordered) - 1)))))
    return ordered[idx]


# --- the harness -----------------------------------------------------------


def run_eval(
    questions,
    engine: Engine,
    condition: str = "full",
    mode: str = "online",
    out_dir=None,
    k: int = 10,
    dataset_dir=None,
    offline_strategy: str = "hybrid",
    detail_name: Optional[str] = None,
) -> MetricsReport:
    """Replay `questions` under `condition`; aggregate metrics; write artifacts.

    `questions` is a JSONL path or a list of QuestionRecord. Offline mode
    needs `dataset_dir`, holding one `<dataset>.log` file per dataset.
    """
    if isinstance(questions, (str, os.PathLike)):
        questions = load_questions(questions)
    options = apply_ablation(condition, engine.default_options)
    if mode not in ("online", "offline"):
        raise InvalidConfigError(f"unknown eval mode: {mode!r}")

    detail_rows: list[dict] = []
    gold, predicted = [], []
    rouges, cosines = [], []
    ranked_texts, references, corpora = [], [], []
    stage_values: dict[str, list[float]] = defaultdict(list)
    errors = 0
    online_corpus = [text for _, text in engine.chunk_fts.items()]

    for q in questions:
        row = {
            "id": q.id,
            "dataset": q.dataset,
            "question": q.question,
            "gold_route": q.gold_route,
        }
        try:
            if mode == "online":
                response = engine.answer_query(q.question, ablation=condition, dataset=q.dataset or None)
                chunk_texts = [e.text for e in response.evidence] if response.route.path == PATH_SEMANTIC else []
                corpus = online_corpus
            else:
                response, chunk_texts, corpus = _offline_answer(
                    q, engine, options, dataset_dir, offline_strategy, k
                )
        except FileNotFoundError as exc:
            errors += 1
            row["error"] = str(exc)
            detail_rows.append(row)
            continue

        row.update(
            predicted_route=response.route.path,
            tier=response.l2.tier if response.l2 else None,
            answer=response.answer,
            degraded=response.degraded,
            degraded_reason=response.degraded_reason,
            latencies=response.latencies,
            trace_id=response.trace_id,
        )
        gold.append(q.gold_route)
        predicted.append(response.route.path)
        if q.reference_answer:
            r = rouge1_f1(response.answer, q.reference_answer)
            rouges.append(r)
            row["rouge1_f1"] = r
            c = cosine_answer_similarity(response.answer, q.reference_answer, engine.provider)
            if c is not None:
                cosines.append(c)
            row["cosine"] = c
        if q.reference_text and chunk_texts:
            ranked_texts.append(chunk_texts)
            references.append(q.reference_text)
            corpora.append(corpus)
        for stage, value in response.latencies.items():
            stage_values[stage].append(value)
        detail_rows.append(row)

    routing = routing_metrics(gold, predicted)
    retrieval = retrieval_metrics(ranked_texts, references, corpora, k=k)
    answer = {
        "mean_cosine": sum(cosines) / len(cosines) if cosines else None,
        "mean_rouge1_f1": sum(rouges) / len(rouges) if rouges else None,
    }
    latency = {
        "mean": {s: sum(v) / len(v) for s, v in stage_values.items()},
        "p50": {s: _percentile(v, 0.50) for s, v in stage_values.items()},
        "p95": {s: _percentile(v, 0.95) for s, v in stage_values.items()},
    }
    report = MetricsReport(
        condition=options.condition,
        mode=mode,
        n=len(gold),
        routing=routing,
        answer=answer,
        retrieval=retrieval,
        latency=latency,
        errors=errors,
    )
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        stem = detail_name or options.condition
        with open(os.path.join(out_dir, f"{stem}_detail.jsonl"), "w", encoding="utf-8") as fh:
            for row in detail_rows:
                fh.write(json.dumps(row, sort_keys=True, ensure_ascii=False) + "\n")
        with open(os.path.join(out_dir, f"{stem}_report.json"), "w", encoding="utf-8") as fh:
            json.dump(report.to_dict(), fh, sort_keys=True, indent=2, ensure_ascii=False)
            fh.write("\n")
        with open(os.path.join(out_dir, f"{stem}_report.md"), "w", encoding="utf-8") as fh:
            fh.write(report.to_markdown())
    return report


def _offline_answer(q, engine, options, dataset_dir, strategy, k):
    """Deterministic chunk injection: the question's dataset file becomes the corpus."""
    if not dataset_dir:
        raise FileNotFoundError(f"offline mode needs dataset_dir (question {q.id})")
    path = os.path.join(dataset_dir, f"{q.dataset}.log")
    if not os.path.exists(path):
        raise FileNotFoundError(f"dataset file missing: {path}")
    src = SourceDescriptor(dataset=q.dataset)
    records = []
    with open(path, "r", encoding="utf-8", errors="replace") as fh:
        for raw in fh:
            rec = normalize_line(raw, src)
            if rec is not None:
                records.append(rec)
    chunks = chunk_records(records, q.dataset, src.source_key, engine.chunk_window, engine.chunk_overlap)
    store = VectorStore(dim=engine.provider.dim)
    fts = KeywordIndex()
    vectors = engine.provider.embed_batch([c.text for c in chunks])
    for chunk, vec in zip(chunks, vectors):
        store.add(chunk, vec)
        fts.add(chunk.chunk_id, chunk.text)

    from .orchestrator import EvidenceItem, QueryResponse, StageTrace, _StageTimer

    trace_id = engine.trace_id_factory()
    timer = _StageTimer(engine.clock, engine.trace_log, trace_id)
    total_start = engine.clock()
    with timer.stage("l1_route"):
        decision = engine._route(q.question, options)
    retriever = Retriever(store, fts, engine.provider)
    with timer.stage("semantic_search"):
        result = retriever.retrieve(q.question, strategy=strategy, top_k=k, per_backend=engine.per_backend)
    with timer.stage("l2_route"):
        l2 = score_l2(q.question, engine.router_cfg, engine.vocab)
        if options.force_tier:
            l2.tier = options.force_tier
    with timer.stage("llm_generate"):
        context = [chunk.text for chunk, _ in result.chunks]
        answer = engine.generator.generate(context, q.question, l2.tier, purpose="answer")
    total = engine.clock() - total_start
    timer.latencies["total"] = total
    engine.trace_log.emit(
        StageTrace(trace_id=trace_id, stage="total", started=total_start, duration=total, outcome="ok")
    )
    response = QueryResponse(
        answer=answer,
        route=decision,
        l2=l2,
        evidence=[EvidenceItem(ref=c.chunk_id, text=c.text, score=s) for c, s in result.chunks],
        sql_text=None,
        latencies=timer.latencies,
        trace_id=trace_id,
    )
    return response, [c.text for c, _ in result.chunks], [c.text for c in chunks]
