"""Read-only HTTP query service over a loaded index snapshot."""
from __future__ import annotations

import logging
import threading
from contextlib import asynccontextmanager
from typing import Optional

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .config import ServiceConfig
from .core import EndpointUnavailable, NewsRagError, format_utc
from .embedder import make_embedder
from .engine import EngineConfig, RagEngine
from .index import IndexEmpty, SearchFilter, VectorIndex
from .llm import ChatClient

log = logging.getLogger(__name__)


class QueryRequest(BaseModel):
    question: str
    k: Optional[int] = None
    language: Optional[str] = None
    use_rag: Optional[bool] = None


class NewsService:
    """Holds the engine and readiness state shared by request handlers."""

    def __init__(self, config: ServiceConfig, index=None, embedder=None, llm=None):
        self.config = config
        self.index: Optional[VectorIndex] = index
        self.embedder = embedder
        self.llm = llm
        self.engine: Optional[RagEngine] = None
        self.ready = False
        self.status = "starting"
        self._lock = threading.Lock()

    def start(self) -> None:
        with self._lock:
            try:
                if self.index is None:
                    self.index = VectorIndex.load_snapshot(self.config.snapshot_path)
                if self.embedder is None:
                    self.embedder = make_embedder(self.config.embedder)
                if self.llm is None:
                    self.llm = ChatClient(self.config.llm)
            except (NewsRagError, OSError) as e:
                log.error("service failed to start: %s", e)
                self.status = f"failed: {e}"
                return
            self.engine = RagEngine(self.index, self.embedder, self.llm, self.config.engine.build())
            probes = [getattr(self.embedder, "probe", None), getattr(self.llm, "probe", None)]
            if all(p() for p in probes if p is not None):
                self.ready = True
                self.status = "ready"
            else:
                self.status = "endpoint probe failed"
            log.info("service status: %s (%d chunks)", self.status, len(self.index))

    def source_record(self, hit) -> dict:
        meta = self.index.get(hit.chunk_id).metadata
        return {
            "chunk_id": hit.chunk_id,
            "recording_id": meta.recording_id,
            "source": meta.source,
            "start_time": format_utc(meta.start_time),
            "end_time": format_utc(meta.end_time),
            "score": hit.score,
            "rank": hit.rank,
        }


def _error(status: int, code: str, message: str, retriable: bool = False) -> JSONResponse:
    return JSONResponse(status_code=status, content={"error": code, "message": message, "retriable": retriable})


def create_app(config: ServiceConfig, *, index=None, embedder=None, llm=None) -> FastAPI:
    service = NewsService(config, index=index, embedder=embedder, llm=llm)

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        service.start()
        yield

    app = FastAPI(title="newsrag", lifespan=lifespan)
    app.state.service = service

    @app.exception_handler(RequestValidationError)
    async def bad_request(request: Request, exc: RequestValidationError):
        return _error(400, "BAD_REQUEST", str(exc.errors()))

    @app.get("/healthz")
    def healthz():
        body = {"status": service.status, "ready": service.ready}
        if service.index is not None:
            body["chunks"] = len(service.index)
        return JSONResponse(status_code=200 if service.ready else 503, content=body)

    @app.post("/v1/query")
    def query(req: QueryRequest):
        if not req.question.strip():
            return _error(400, "EMPTY_QUESTION", "question is empty")
        if not service.ready:
            return _error(503, "NOT_READY", service.status, retriable=True)
        base = service.engine.config
        cfg = EngineConfig(
            k=req.k if req.k is not None else base.k,
            filter=SearchFilter(language=req.language, source=base.filter.source) if req.language else base.filter,
            use_rag=base.use_rag if req.use_rag is None else req.use_rag,
            template_version=base.template_version,
            max_prompt_chars=base.max_prompt_chars,
        )
        try:
            answer = service.engine.answer(req.question, cfg)
        except EndpointUnavailable as e:
            return _error(503, e.code, str(e), retriable=e.retriable)
        except IndexEmpty as e:
            return _error(503, e.code, str(e))
        except NewsRagError as e:
            return _error(400, e.code, str(e))
        unresolved = [h.chunk_id for h in answer.sources if h.chunk_id not in service.index]
        if unresolved:
            return _error(500, "UNRESOLVED_SOURCE", f"sources not in snapshot: {unresolved}")
        return {
            "answer": answer.text,
            "sources": [service.source_record(h) for h in answer.sources],
            "model_id": answer.model_id,
            "template_version": answer.template_version,
        }

    @app.post("/v1/ingest")
    def ingest():
        return _error(501, "NOT_IMPLEMENTED", "the service is read-only; ingest with the CLI")

    return app
