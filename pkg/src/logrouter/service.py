"""HTTP front door for the engine.

Endpoints (consumed by the CLI's repl and the web console):
  POST /query           {question, strategy?, ablation?, dataset?} -> QueryResponse
  POST /ingest          {dataset, lines | file, ...descriptor} -> ingestion report
  GET  /templates       -> template catalogue
  GET  /routes/explain  ?q=... -> L1 + L2 decisions without execution
  GET  /health          -> status, index counts, provider reachability
  GET  /config          -> effective config
"""

from __future__ import annotations

from typing import Optional

import requests
from fastapi import FastAPI, HTTPException, Query
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel

from .config import ServiceConfig, build_engine
from .errors import IngestionError, InvalidConfigError, LogRouterError
from .ingest import SourceDescriptor
from .orchestrator import Engine


class QueryRequest(BaseModel):
    question: str
    strategy: Optional[str] = None
    ablation: Optional[str] = None
    dataset: Optional[str] = None


class IngestRequest(BaseModel):
    dataset: str
    lines: Optional[list[str]] = None
    file: Optional[str] = None
    namespace: str = "unknown"
    app: str = "unknown"
    pod: str = "unknown"
    container: str = "unknown"
    ts_format: Optional[str] = None


def create_app(engine: Engine, cfg: Optional[ServiceConfig] = None) -> FastAPI:
    cfg = cfg or ServiceConfig()
    app = FastAPI(title="logrouter", version="0.1.0")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=list(cfg.cors_origins),
        allow_methods=["*"],
        allow_headers=["*"],
    )
    app.state.engine = engine
    app.state.config = cfg

    @app.post("/query")
    def query(req: QueryRequest):
        if not req.question.strip():
            raise HTTPException(status_code=400, detail={"error": "invalid-config", "message": "question must be non-empty"})
        try:
            response = engine.answer_query(
                req.question,
                strategy=req.strategy,
                ablation=req.ablation,
                dataset=req.dataset,
            )
        except InvalidConfigError as exc:
            raise HTTPException(status_code=400, detail={"error": "invalid-config", "message": str(exc)})
        return response.to_dict()

    @app.post("/ingest")
    def ingest(req: IngestRequest):
        src = _descriptor_for(req, cfg)
        try:
            if req.lines is not None:
                report, warnings = engine.ingest_lines(req.lines, src)
            elif req.file:
                report, warnings = engine.ingest_file(req.file, src)
            else:
                raise HTTPException(
                    status_code=400,
                    detail={"error": "invalid-config", "message": "provide 'lines' or 'file'"},
                )
        except IngestionError as exc:
            raise HTTPException(status_code=400, detail={"error": "ingestion-failed", "message": str(exc)})
        out = report.to_dict()
        out["warnings"] = warnings
        return out

    @app.get("/templates")
    def templates():
        return {"templates": [t.to_dict() for t in engine.catalogue().values()]}

    @app.get("/routes/explain")
    def explain(q: str = Query(...), ablation: Optional[str] = None):
        if not q.strip():
            raise HTTPException(status_code=400, detail={"error": "invalid-config", "message": "q must be non-empty"})
        options = engine.default_options
        if ablation is not None:
            try:
                from .orchestrator import apply_ablation

                options = apply_ablation(ablation, options)
            except InvalidConfigError as exc:
                raise HTTPException(status_code=400, detail={"error": "invalid-config", "message": str(exc)})
        decision, l2 = engine.explain(q, options)
        return {"l1": decision.to_dict(), "l2": l2.to_dict()}

    @app.get("/health")
    def health():
        return {
            "status": "ok",
            "counts": engine.counts(),
            "providers": {
                "embedding": _embedding_reachable(engine),
                "generator": _generator_reachable(engine),
            },
        }

    @app.get("/config")
    def config():
        return cfg.to_dict()

    return app


def _descriptor_for(req: IngestRequest, cfg: ServiceConfig) -> SourceDescriptor:
    spec = cfg.datasets.get(req.dataset)
    if spec and req.namespace == "unknown":
        return SourceDescriptor(
            dataset=req.dataset,
            namespace=spec.namespace,
            app=spec.app,
            pod=spec.pod,
            container=spec.container,
            ts_format=req.ts_format or spec.ts_format,
        )
    return SourceDescriptor(
        dataset=req.dataset,
        namespace=req.namespace,
        app=req.app,
        pod=req.pod,
        container=req.container,
        ts_format=req.ts_format,
    )


def _embedding_reachable(engine: Engine) -> bool:
    if engine.embed_cfg.kind == "hashed":
        return True
    try:
        engine.provider.embed("ping")
        return True
    except LogRouterError:
        return False


def _generator_reachable(engine: Engine) -> bool:
    if engine.gen_cfg.kind == "stub":
        return True
    endpoint = engine.gen_cfg.resolved_endpoint()
    try:
        requests.get(endpoint, timeout=2)
        return True
    except requests.RequestException:
        return False


def serve(cfg: ServiceConfig) -> None:
    """Build the engine and serve until interrupted."""
    import uvicorn

    engine = build_engine(cfg)
    app = create_app(engine, cfg)
    uvicorn.run(app, host=cfg.listen_host, port=cfg.listen_port, log_level="info")
