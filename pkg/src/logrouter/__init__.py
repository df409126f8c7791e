"""Self-hosted log question answering with cost-aware two-level routing."""

from .chunker import Chunk, chunk_records
from .drain import DrainMiner, Template, mask, template_id_of
from .embedding import EmbeddingProviderConfig, EmbeddingVector, make_provider
from .ingest import LogRecord, Severity, SourceDescriptor, detect_severity, normalize_line
from .orchestrator import Engine, GeneratorConfig, QueryResponse, apply_ablation
from .retrieval import extract_quoted_literals, rrf_fuse
from .router import (
    L1Decision,
    L2Decision,
    RouterConfig,
    SignalVocabulary,
    route_l1,
    score_l2,
    validate_search_term,
)

__version__ = "0.1.0"

__all__ = [
    "Chunk",
    "DrainMiner",
    "EmbeddingProviderConfig",
    "EmbeddingVector",
    "Engine",
    "GeneratorConfig",
    "L1Decision",
    "L2Decision",
    "LogRecord",
    "QueryResponse",
    "RouterConfig",
    "Severity",
    "SignalVocabulary",
    "SourceDescriptor",
    "Template",
    "apply_ablation",
    "chunk_records",
    "detect_severity",
    "extract_quoted_literals",
    "make_provider",
    "mask",
    "normalize_line",
    "route_l1",
    "rrf_fuse",
    "score_l2",
    "template_id_of",
    "validate_search_term",
]
