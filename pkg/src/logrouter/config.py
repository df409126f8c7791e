"""Service configuration: loading, validation, and engine assembly.

Config files are TOML or JSON; every numeric parameter is validated
against its module invariant at load time and a violation refuses startup
with a field-precise message. LOGROUTER_CONFIG points at the default file.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import Optional

from .embedding import EmbeddingProviderConfig
from .errors import InvalidConfigError
from .orchestrator import Engine, GeneratorConfig, PipelineOptions, apply_ablation
from .router import RouterConfig, SignalVocabulary

CONFIG_ENV = "LOGROUTER_CONFIG"

ROWS_SNAPSHOT = "rows.ndjson"
VECTORS_SNAPSHOT = "vectors.bin"
DRAIN_SNAPSHOT = "drain_state.json"


@dataclass
class DatasetSpec:
    """Per-dataset source descriptor defaults (config block or CLI flags)."""

    namespace: str = "unknown"
    app: str = "unknown"
    pod: str = "unknown"
    container: str = "unknown"
    ts_format: Optional[str] = None


@dataclass
class ServiceConfig:
    listen_host: str = "127.0.0.1"
    listen_port: int = 8080
    cors_origins: list = field(default_factory=lambda: ["*"])
    snapshot_dir: Optional[str] = None
    vocab_path: Optional[str] = None
    trace_path: Optional[str] = None
    router: RouterConfig = field(default_factory=RouterConfig)
    embedding: EmbeddingProviderConfig = field(default_factory=EmbeddingProviderConfig)
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    chunk_window: int = 25
    chunk_overlap: int = 3
    drain_depth: int = 4
    drain_sim_th: float = 0.4
    drain_max_children: int = 100
    drain_id_prefix_len: int = 8
    top_k: int = 10
    per_backend: int = 20
    keyword_top_n: int = 20
    keyword_summary: bool = True
    ablation: str = "full"
    datasets: dict = field(default_factory=dict)

    def validate(self) -> None:
        checks = [
            ("listen_port", 0 < self.listen_port < 65536, "must be a valid port"),
            ("chunk_window", self.chunk_window > 0, "must be positive"),
            (
                "chunk_overlap",
                0 <= self.chunk_overlap < self.chunk_window,
                "must satisfy 0 <= overlap < window",
            ),
            ("drain_depth", self.drain_depth >= 3, "must be >= 3"),
            ("drain_sim_th", 0 < self.drain_sim_th <= 1, "must be in (0, 1]"),
            ("drain_max_children", self.drain_max_children > 0, "must be positive"),
            ("drain_id_prefix_len", 1 <= self.drain_id_prefix_len <= 32, "must be in [1, 32]"),
            ("top_k", self.top_k > 0, "must be positive"),
            ("per_backend", self.per_backend > 0, "must be positive"),
            ("keyword_top_n", self.keyword_top_n > 0, "must be positive"),
        ]
        for name, ok, message in checks:
            if not ok:
                raise InvalidConfigError(f"{name}: {message} (got {getattr(self, name)!r})")
        self.router.validate()
        self.embedding.validate()
        self.generator.validate()
        apply_ablation(self.ablation)  # raises on unknown condition

    @classmethod
    def from_dict(cls, data: dict) -> "ServiceConfig":
        data = dict(data)
        router = RouterConfig(**data.pop("router", {}))
        embedding = EmbeddingProviderConfig(**data.pop("embedding", {}))
        generator = GeneratorConfig(**data.pop("generator", {}))
        datasets = {
            name: DatasetSpec(**spec) for name, spec in data.pop("datasets", {}).items()
        }
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise InvalidConfigError(f"unknown config fields: {sorted(unknown)}")
        cfg = cls(router=router, embedding=embedding, generator=generator, datasets=datasets, **data)
        cfg.validate()
        return cfg

    @classmethod
    def from_file(cls, path) -> "ServiceConfig":
        text = open(path, "rb").read()
        if str(path).endswith(".toml"):
            try:
                import tomllib  # py311+
            except ImportError:
                import tomli as tomllib
            data = tomllib.loads(text.decode("utf-8"))
        else:
            data = json.loads(text.decode("utf-8"))
        try:
            return cls.from_dict(data)
        except TypeError as exc:
            raise InvalidConfigError(f"bad config shape: {exc}") from exc

    @classmethod
    def from_env_or_default(cls, explicit_path=None) -> "ServiceConfig":
        path = explicit_path or os.environ.get(CONFIG_ENV)
        if path:
            return cls.from_file(path)
        return cls()

    def to_dict(self) -> dict:
        return {
            "listen_host": self.listen_host,
            "listen_port": self.listen_port,
            "cors_origins": list(self.cors_origins),
            "snapshot_dir": self.snapshot_dir,
            "vocab_path": self.vocab_path,
            "trace_path": self.trace_path,
            "router": {
                "sql_threshold": self.router.sql_threshold,
                "keyword_threshold": self.router.keyword_threshold,
                "event_threshold": self.router.event_threshold,
                "complexity_threshold": self.router.complexity_threshold,
                "weight_per_match": self.router.weight_per_match,
                "len_saturation_words": self.router.len_saturation_words,
                "per_match_increment": self.router.per_match_increment,
                "p5_schema_exclusion": self.router.p5_schema_exclusion,
            },
            "embedding": {
                "kind": self.embedding.kind,
                "endpoint": self.embedding.endpoint,
                "model_tag": self.embedding.model_tag,
                "dim": self.embedding.resolved_dim(),
                "timeout": self.embedding.timeout,
                "seed": self.embedding.seed,
                "max_inflight": self.embedding.max_inflight,
            },
            "generator": {
                "kind": self.generator.kind,
                "endpoint": self.generator.endpoint,
                "small_model_tag": self.generator.small_model_tag,
                "large_model_tag": self.generator.large_model_tag,
                "coder_model_tag": self.generator.coder_model_tag,
                "timeout": self.generator.timeout,
            },
            "chunk_window": self.chunk_window,
            "chunk_overlap": self.chunk_overlap,
            "drain_depth": self.drain_depth,
            "drain_sim_th": self.drain_sim_th,
            "drain_max_children": self.drain_max_children,
            "drain_id_prefix_len": self.drain_id_prefix_len,
            "top_k": self.top_k,
            "per_backend": self.per_backend,
            "keyword_top_n": self.keyword_top_n,
            "keyword_summary": self.keyword_summary,
            "ablation": self.ablation,
            "datasets": {
                name: {
                    "namespace": d.namespace,
                    "app": d.app,
                    "pod": d.pod,
                    "container": d.container,
                    "ts_format": d.ts_format,
                }
                for name, d in self.datasets.items()
            },
        }


def build_engine(cfg: ServiceConfig, clock=None, trace_id_factory=None) -> Engine:
    """Assemble an Engine from config, loading snapshots when present."""
    cfg.validate()
    from .drain import DrainMiner

    vocab = SignalVocabulary.from_file(cfg.vocab_path) if cfg.vocab_path else SignalVocabulary.default()
    miner = DrainMiner(
        depth=cfg.drain_depth,
        sim_th=cfg.drain_sim_th,
        max_children=cfg.drain_max_children,
        id_prefix_len=cfg.drain_id_prefix_len,
    )
    engine = Engine(
        vocab=vocab,
        router_cfg=cfg.router,
        embed_cfg=cfg.embedding,
        gen_cfg=cfg.generator,
        miner=miner,
        chunk_window=cfg.chunk_window,
        chunk_overlap=cfg.chunk_overlap,
        top_k=cfg.top_k,
        per_backend=cfg.per_backend,
        keyword_top_n=cfg.keyword_top_n,
        keyword_summary=cfg.keyword_summary,
        default_options=apply_ablation(cfg.ablation, PipelineOptions()),
        trace_path=cfg.trace_path,
        clock=clock,
        trace_id_factory=trace_id_factory,
    )
    if cfg.snapshot_dir and os.path.isdir(cfg.snapshot_dir):
        engine.load_snapshot(cfg.snapshot_dir)
    return engine
