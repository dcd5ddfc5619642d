"""HTTP front end for :class:`IngestPipeline`."""

from __future__ import annotations

import contextlib
import logging
import time

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from fastapi.concurrency import run_in_threadpool

from .pipeline import IngestConfig, IngestPipeline

logger = logging.getLogger(__name__)


def create_app(pipeline: IngestPipeline) -> FastAPI:
    @contextlib.asynccontextmanager
    async def lifespan(app):
        yield
        pipeline.close()

    app = FastAPI(title="sensorstd ingest", lifespan=lifespan)
    app.state.pipeline = pipeline

    @app.post("/ingest/{source}")
    async def ingest(source: str, request: Request):
        received_at = time.time_ns()
        body = await request.body()
        # standardization may block on a remote model; keep it off the event loop
        result = await run_in_threadpool(pipeline.submit, source, body,
                                         request.headers.get("content-type"), received_at)
        return JSONResponse(result.body, status_code=result.status, headers=dict(result.headers))

    @app.get("/health")
    def health():
        return {"status": "ok", "initialized": pipeline.engine.state is not None}

    @app.get("/trajectory/latest")
    def latest():
        doc = pipeline.latest_document()
        if doc is None:
            return JSONResponse({"error": "NotInitialized", "message": "no position fix yet"}, status_code=404)
        return doc

    @app.get("/metrics/counters")
    def counters():
        return pipeline.counter_document()

    return app


def serve(config: IngestConfig, pipeline: IngestPipeline | None = None) -> None:
    """Run the service until interrupted."""
    import uvicorn

    pipeline = pipeline or IngestPipeline(config, threaded=True)
    uvicorn.run(create_app(pipeline), host=config.host, port=config.port, log_level="info")
