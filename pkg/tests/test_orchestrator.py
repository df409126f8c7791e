import random
import re
from datetime import datetime, timedelta, timezone

import pytest

from logrouter.embedding import EmbeddingProviderConfig
from logrouter.errors import GeneratorUnavailableError, InvalidConfigError
from logrouter.ingest import SourceDescriptor
from logrouter.orchestrator import (
    Engine,
    GeneratorConfig,
    PipelineOptions,
    StubGenerator,
    apply_ablation,
    generate,
    render_sql_result,
    stub_sql,
)

from conftest import build_deterministic_engine

UTC = timezone.utc
SRC = SourceDescriptor(dataset="fix", namespace="ns", app="app1", pod="p1")


def iso_lines(specs):
    """specs: (offset_minutes, level, text) -> ISO-stamped lines."""
    base = datetime(2024, 6, 1, 12, 0, tzinfo=UTC)
    out = []
    for offset, level, text in specs:
        ts = (base + timedelta(minutes=offset)).isoformat().replace("+00:00", "Z")
        out.append(f"{ts} {level} {text}")
    return out


@pytest.fixture
def fixture_engine():
    engine = build_deterministic_engine()
    engine.ingest_lines(
        iso_lines(
            [(i, "ERROR", f"error 503 upstream {i}") for i in range(7)]
            + [(i + 10, "INFO", f"routine heartbeat {i}") for i in range(5)]
            + [(-120, "ERROR", "stale failure out of window")]
        ),
        SRC,
    )
    return engine


class TestPaths:
    def test_general_path_stages(self, fixture_engine):
        r = fixture_engine.answer_query("hello")
        assert r.route.path == "general"
        assert r.answer == "STUB[small] evidence=0 q=hello"
        assert set(r.latencies) == {"l1_route", "llm_generate", "total"}

    def test_keyword_path_verbatim(self, fixture_engine):
        r = fixture_engine.answer_query("Find lines containing error 503")
        assert r.route.path == "keyword"
        lines = r.answer.splitlines()
        assert lines[-1] == "MATCHES: 7"
        assert all("error 503" in line for line in lines[:-1])
        assert "keyword_search" in r.latencies
        assert "semantic_search" not in r.latencies

    def test_keyword_summary_flag_off(self):
        engine = build_deterministic_engine(keyword_summary=False)
        engine.ingest_lines(iso_lines([(0, "ERROR", "error 503 here")]), SRC)
        r = engine.answer_query("Find lines containing error 503")
        assert "MATCHES" not in r.answer
        assert "llm_generate" not in r.latencies

    def test_sql_path_verbatim_count(self, fixture_engine):
        r = fixture_engine.answer_query("How many ERROR events occurred in the last hour?")
        assert r.route.path == "sql"
        # brute force: 7 in-window ERROR rows (the stale one is outside)
        assert r.answer == "7"
        assert r.sql_text and "COUNT(*)" in r.sql_text
        assert "llm_generate" not in r.latencies
        assert {"sql_generate", "sql_execute"} <= set(r.latencies)

    def test_semantic_path(self, fixture_engine):
        r = fixture_engine.answer_query("Why did the upstream keep failing after noon?")
        assert r.route.path == "semantic"
        assert r.answer.startswith("STUB[small] evidence=")
        assert r.l2 is not None and r.l2.tier == "small"
        assert {"semantic_search", "l2_route", "llm_generate"} <= set(r.latencies)

    def test_path_exclusivity(self, fixture_engine):
        families = {
            "keyword": "keyword_search",
            "sql": "sql_execute",
            "semantic": "semantic_search",
        }
        for question in (
            "Find lines containing error 503",
            "How many ERROR events occurred in the last hour?",
            "Why did the upstream keep failing after noon?",
        ):
            r = fixture_engine.answer_query(question)
            present = [s for s in families.values() if s in r.latencies]
            assert present == [families[r.route.path]]

    def test_total_at_least_max_component(self, fixture_engine):
        r = fixture_engine.answer_query("Why did the upstream keep failing?")
        components = [v for k, v in r.latencies.items() if k != "total"]
        assert r.latencies["total"] >= max(components)

    def test_trace_completeness(self, fixture_engine):
        r = fixture_engine.answer_query("Find lines containing error 503")
        assert fixture_engine.trace_log.stages_for(r.trace_id) == set(r.latencies)

    def test_empty_question_rejected(self, fixture_engine):
        with pytest.raises(ValueError):
            fixture_engine.answer_query("  ")

    def test_tainted_term_downgrades_to_semantic(self, fixture_engine):
        r = fixture_engine.answer_query("Find lines containing \"x'; DROP TABLE logs --\"")
        assert r.route.path == "semantic"
        assert not r.degraded  # a security downgrade, not a failure


class TestSqlPath:
    def test_group_by_brute_force(self):
        engine = build_deterministic_engine()
        rng = random.Random(0)
        levels = [rng.choice(["ERROR", "WARN", "INFO"]) for _ in range(60)]
        engine.ingest_lines(
            iso_lines([(i, lvl, f"payload {i}") for i, lvl in enumerate(levels)]), SRC
        )
        r = engine.answer_query("Show the breakdown by level")
        assert r.route.path == "sql"
        counts = {}
        for lvl in levels:
            counts[lvl] = counts.get(lvl, 0) + 1
        expected = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
        assert r.answer == "\n".join(f"{g}: {c}" for g, c in expected)

    def test_fallback_branch_when_no_template_matches(self, fixture_engine):
        # question content words match no template: the vector-metadata
        # fallback still supplies template context and the query answers
        r = fixture_engine.answer_query("How many zzyzx qwerty flibber?")
        assert r.route.path == "sql"
        assert r.answer == str(len(fixture_engine.row_store))
        assert r.evidence  # templates recovered via chunk->rows fallback

    def test_unparseable_sql_twice_degrades(self, fixture_engine):
        class BadCoder(StubGenerator):
            def generate(self, context, question, tier, purpose="answer"):
                if purpose == "sql":
                    return "DROP TABLE logs_raw"
                return super().generate(context, question, tier, purpose)

        fixture_engine.generator = BadCoder(fixture_engine.gen_cfg)
        r = fixture_engine.answer_query("How many ERROR events occurred?")
        assert r.degraded and r.answer == "service unavailable: sql"
        assert "sql_execute" not in r.latencies

    def test_retry_recovers_once(self, fixture_engine):
        calls = []

        class FlakyCoder(StubGenerator):
            def generate(self, context, question, tier, purpose="answer"):
                if purpose == "sql":
                    calls.append(question)
                    if len(calls) == 1:
                        return "SELECT nonsense"
                    return "SELECT COUNT(*) FROM logs_raw"
                return super().generate(context, question, tier, purpose)

        fixture_engine.generator = FlakyCoder(fixture_engine.gen_cfg)
        r = fixture_engine.answer_query("How many events are there?")
        assert not r.degraded
        assert r.answer == str(len(fixture_engine.row_store))
        assert len(calls) == 2
        assert "previous attempt failed" in calls[1]

    def test_empty_store_degrades(self, empty_engine):
        r = empty_engine.answer_query("What percentage of events are ERROR level?")
        assert r.route.path == "sql"
        assert r.degraded and "sql" in r.answer


class TestStubSql:
    def test_count_rule(self):
        sql = stub_sql(["table logs_raw(...) rows=10 ts_min=none ts_max=none"], "How many ERROR events?")
        assert sql == "SELECT COUNT(*) FROM logs_raw WHERE level = 'ERROR'"

    def test_topk_rule(self):
        sql = stub_sql([], "Show the top 3 pods by volume")
        assert sql == (
            "SELECT pod, COUNT(*) FROM logs_raw GROUP BY pod ORDER BY COUNT(*) DESC LIMIT 3"
        )

    def test_groupby_rule(self):
        sql = stub_sql([], "How many events per app?")
        assert sql == "SELECT app, COUNT(*) FROM logs_raw GROUP BY app ORDER BY COUNT(*) DESC"

    def test_percentage_rule(self):
        sql = stub_sql([], "What percentage of events are WARN level?")
        assert sql == "SELECT PERCENTAGE(level = 'WARN') FROM logs_raw"

    def test_window_uses_schema_ts_max(self):
        schema = "table logs_raw(...) rows=5 ts_min=2024-01-01T00:00:00+00:00 ts_max=2024-01-02T00:00:00+00:00"
        sql = stub_sql([schema], "How many ERROR events in the last hour?")
        assert "ts BETWEEN '2024-01-01T23:00:00+00:00' AND '2024-01-02T00:00:00+00:00'" in sql

    def test_quoted_literal_becomes_like(self):
        sql = stub_sql([], 'How many lines mention "disk full"?')
        assert "line LIKE '%disk full%'" in sql


class TestGenerators:
    def test_stub_answer_format(self):
        out = generate(["a", "b", "c"], "Why did the service crash?", "small", GeneratorConfig())
        assert out == "STUB[small] evidence=3 q=why did the service crash"

    def test_stub_purity(self):
        cfg = GeneratorConfig()
        args = (["x"], "What happened at noon today exactly?", "large")
        assert generate(*args, cfg) == generate(*args, cfg)

    def test_stub_summary(self):
        gen = StubGenerator(GeneratorConfig())
        assert gen.generate(["l1", "l2"], "q", "small", purpose="summary") == "MATCHES: 2"

    def test_remote_unreachable(self):
        cfg = GeneratorConfig(kind="remote", endpoint="http://127.0.0.1:1", timeout=0.2)
        with pytest.raises(GeneratorUnavailableError):
            generate([], "hi", "small", cfg)

    def test_remote_requires_endpoint(self):
        with pytest.raises(InvalidConfigError):
            GeneratorConfig(kind="remote").validate()

    def test_timeout_env_override(self, monkeypatch):
        monkeypatch.setenv("LOGROUTER_GEN_TIMEOUT_MS", "1500")
        assert GeneratorConfig().resolved_timeout() == pytest.approx(1.5)


class TestAblations:
    def test_mappings(self):
        assert apply_ablation("full") == PipelineOptions(condition="full")
        assert apply_ablation("no_l1").force_path == "semantic"
        assert apply_ablation("no_l2").force_tier == "small"
        no_routing = apply_ablation("no_routing")
        assert (no_routing.force_path, no_routing.force_tier) == ("semantic", "small")
        assert apply_ablation("semantic_only").force_path == "semantic"
        assert apply_ablation("keyword_only").force_path == "keyword"
        assert apply_ablation("hybrid").strategy == "hybrid"
        assert apply_ablation("always_large").force_tier == "large"
        assert apply_ablation("no_drain").hide_catalogue is True

    def test_dash_normalization(self):
        assert apply_ablation("no-l2").condition == "no_l2"

    def test_unknown_condition(self):
        with pytest.raises(InvalidConfigError):
            apply_ablation("bogus")

    def test_no_l2_keeps_route_but_forces_small(self, fixture_engine):
        r = fixture_engine.answer_query(
            "Summarize and compare error patterns across multiple services over the last 24h and correlate with restarts",
            ablation="no_l2",
        )
        assert r.route.path == "semantic"
        assert r.l2.total >= 0.5  # would have been large
        assert r.l2.tier == "small"
        assert "STUB[small]" in r.answer

    def test_always_large(self, fixture_engine):
        r = fixture_engine.answer_query("Why did the upstream fail?", ablation="always_large")
        assert r.l2.tier == "large"
        assert "STUB[large]" in r.answer

    def test_keyword_only_forces_keyword(self, fixture_engine):
        r = fixture_engine.answer_query("Why did the upstream keep failing?", ablation="keyword_only")
        assert r.route.path == "keyword"

    def test_no_drain_reroutes_and_hides_templates(self, fixture_engine):
        r = fixture_engine.answer_query(
            "How many ERROR events occurred in the last hour?", ablation="no_drain"
        )
        assert r.route.path == "semantic"
        assert r.sql_text is None

    def test_full_is_identity(self, fixture_engine):
        a = fixture_engine.answer_query("Find lines containing error 503")
        b = fixture_engine.answer_query("Find lines containing error 503", ablation="full")
        assert a.route == b.route and a.answer == b.answer


class TestResilience:
    def test_generator_down_general(self, fixture_engine):
        fixture_engine.generator = _down_generator()
        r = fixture_engine.answer_query("hello")
        assert r.degraded
        assert r.answer == "service unavailable: generator"

    def test_generator_down_semantic(self, fixture_engine):
        fixture_engine.generator = _down_generator()
        r = fixture_engine.answer_query("Why did the upstream keep failing?")
        assert r.degraded
        assert "service unavailable" in r.answer
        assert r.evidence  # retrieval still produced evidence

    def test_generator_down_keyword_keeps_lines(self, fixture_engine):
        fixture_engine.generator = _down_generator()
        r = fixture_engine.answer_query("Find lines containing error 503")
        assert r.degraded
        assert "error 503" in r.answer
        assert "service unavailable: summary" in r.answer

    def test_embedder_down_semantic_falls_back(self):
        engine = build_deterministic_engine()
        engine.ingest_lines(iso_lines([(0, "INFO", "alpha beta gamma")]), SRC)
        engine.retriever.provider = _down_provider()
        r = engine.answer_query("Tell me about alpha beta")
        assert r.route.path == "semantic"
        assert r.degraded and "embedding provider unavailable" in r.degraded_reason
        assert r.evidence  # keyword-only fallback still found the chunk


def _down_generator():
    class Down:
        kind = "remote"

        def generate(self, *a, **k):
            raise GeneratorUnavailableError("connection refused")

    return Down()


def _down_provider():
    from logrouter.errors import ProviderUnavailableError

    class Down:
        dim = 256

        def embed(self, text):
            raise ProviderUnavailableError("connection refused")

        def embed_batch(self, texts):
            raise ProviderUnavailableError("connection refused")

    return Down()


class TestIngestAndSnapshot:
    def test_ingest_counts(self, tmp_path):
        engine = build_deterministic_engine()
        lines = ["a line", "", "another line", "   ", "third line"]
        report, warnings = engine.ingest_lines(lines, SRC)
        assert (report.records, report.dropped) == (3, 2)
        assert report.records + report.dropped == len(lines)
        assert not warnings

    def test_embedding_failure_warns_but_ingests(self):
        engine = build_deterministic_engine()
        engine.provider = _down_provider()
        report, warnings = engine.ingest_lines(["alpha beta"], SRC)
        assert report.records == 1
        assert warnings and "embedding skipped" in warnings[0]
        assert len(engine.raw_lines) == 1
        assert len(engine.vector_store) == 0

    def test_snapshot_roundtrip(self, tmp_path, fixture_engine):
        fixture_engine.save_snapshot(tmp_path)
        restored = build_deterministic_engine()
        restored.load_snapshot(tmp_path)
        assert restored.counts() == fixture_engine.counts()
        a = fixture_engine.answer_query("How many ERROR events occurred in the last hour?")
        b = restored.answer_query("How many ERROR events occurred in the last hour?")
        assert a.answer == b.answer
        ka = fixture_engine.answer_query("Find lines containing error 503")
        kb = restored.answer_query("Find lines containing error 503")
        assert ka.answer == kb.answer


def test_render_sql_result():
    assert render_sql_result(7) == "7"
    assert render_sql_result(33.333333) == "33.33"
    assert render_sql_result([("ERROR", 2), ("INFO", 1)]) == "ERROR: 2\nINFO: 1"


def test_explain_side_effect_free(fixture_engine):
    before_counts = fixture_engine.counts()
    before_traces = len(fixture_engine.trace_log.records)
    for _ in range(5):
        fixture_engine.explain("How many ERROR events occurred in the last hour?")
    assert fixture_engine.counts() == before_counts
    assert len(fixture_engine.trace_log.records) == before_traces


def test_concurrent_queries(fixture_engine):
    from concurrent.futures import ThreadPoolExecutor

    questions = [
        "hello",
        "Find lines containing error 503",
        "How many ERROR events occurred in the last hour?",
        "Why did the upstream keep failing?",
    ] * 4
    with ThreadPoolExecutor(max_workers=8) as pool:
        responses = list(pool.map(fixture_engine.answer_query, questions))
    assert len({r.trace_id for r in responses}) == len(responses)
    for r in responses:
        assert r.answer
        assert fixture_engine.trace_log.stages_for(r.trace_id) == set(r.latencies)
