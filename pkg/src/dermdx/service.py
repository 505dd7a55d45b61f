"""HTTP diagnosis service over the fused models.

Model handles are loaded once at startup and shared read-only across
requests; every request gets its own trace state.  All error responses use
the machine-readable envelope {"error": {"code": ..., "message": ...}}.
"""

from __future__ import annotations

import io
import json
import logging
import time
from dataclasses import dataclass
from pathlib import Path

from fastapi import FastAPI, File, Form, Request, UploadFile
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from PIL import Image
from starlette.exceptions import HTTPException as StarletteHTTPException

from dermdx.fusion import FusionConfig, diagnose, load_fusion_models

logger = logging.getLogger(__name__)

DEFAULT_MAX_UPLOAD_BYTES = 8 * 1024 * 1024
DEFAULT_MAX_NARRATIVE_CHARS = 20_000


class ServiceInputError(Exception):
    def __init__(self, code: str, message: str, status: int = 400):
        super().__init__(message)
        self.code = code
        self.message = message
        self.status = status


@dataclass(frozen=True)
class ServiceConfig:
    vision_checkpoint: Path
    text_checkpoint: Path
    top_n: int = 5
    chain_k: int | None = 5
    registry_version: str | None = None  # pin; checked against the checkpoints
    max_upload_bytes: int = DEFAULT_MAX_UPLOAD_BYTES
    max_narrative_chars: int = DEFAULT_MAX_NARRATIVE_CHARS
    static_dir: Path | None = None  # serve the browser console from here

    @classmethod
    def from_file(cls, path: str | Path) -> "ServiceConfig":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(
            vision_checkpoint=Path(data["vision_checkpoint"]),
            text_checkpoint=Path(data["text_checkpoint"]),
            top_n=data.get("top_n", 5),
            chain_k=data.get("chain_k", 5),
            registry_version=data.get("registry_version"),
            max_upload_bytes=data.get("max_upload_bytes", DEFAULT_MAX_UPLOAD_BYTES),
            max_narrative_chars=data.get("max_narrative_chars", DEFAULT_MAX_NARRATIVE_CHARS),
            static_dir=Path(data["static_dir"]) if data.get("static_dir") else None,
        )


def _error_response(status: int, code: str, message: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"error": {"code": code, "message": message}})


def create_app(config: ServiceConfig, clock=time.perf_counter) -> FastAPI:
    vision_model, text_model = load_fusion_models(config.vision_checkpoint, config.text_checkpoint)
    registry = vision_model.registry
    if config.registry_version and config.registry_version != registry.version:
        raise ValueError(
            f"config pins registry {config.registry_version!r} but checkpoints use {registry.version!r}"
        )

    app = FastAPI(title="dermdx", version="0.1.0", docs_url=None, redoc_url=None)

    @app.exception_handler(ServiceInputError)
    async def handle_input_error(request: Request, exc: ServiceInputError):
        return _error_response(exc.status, exc.code, exc.message)

    @app.exception_handler(RequestValidationError)
    async def handle_validation_error(request: Request, exc: RequestValidationError):
        missing = sorted(
            ".".join(str(p) for p in err.get("loc", [])[1:]) for err in exc.errors()
        )
        return _error_response(400, "invalid_request", f"invalid or missing fields: {', '.join(missing)}")

    @app.exception_handler(StarletteHTTPException)
    async def handle_http_exception(request: Request, exc: StarletteHTTPException):
        # covers malformed multipart bodies and unknown routes
        code = "invalid_request" if 400 <= exc.status_code < 500 else "internal_error"
        return _error_response(exc.status_code, code, str(exc.detail))

    @app.exception_handler(Exception)
    async def handle_unexpected(request: Request, exc: Exception):
        logger.exception("unhandled service error")
        return _error_response(500, "internal_error", "unexpected server error")

    @app.get("/v1/health")
    def health() -> JSONResponse:
        return JSONResponse(
            content={
                "status": "ok",
                "registry_version": registry.version,
                "vision_model": vision_model.model_id,
                "text_model": text_model.model_id,
            }
        )

    @app.get("/v1/classes")
    def classes() -> JSONResponse:
        return JSONResponse(
            content={
                "registry_version": registry.version,
                "classes": [{"code": code, "name": name} for code, name in registry.classes],
            }
        )

    @app.post("/v1/diagnose")
    async def diagnose_endpoint(
        image: UploadFile = File(...),
        narrative: str = Form(...),
        top_n: int | None = Form(default=None),
        k: int | None = Form(default=None),
        mode: str | None = Form(default=None),
    ) -> JSONResponse:
        payload = await image.read()
        if len(payload) > config.max_upload_bytes:
            raise ServiceInputError(
                "payload_too_large",
                f"image exceeds the {config.max_upload_bytes} byte limit",
                status=413,
            )
        if not narrative.strip():
            raise ServiceInputError("empty_narrative", "narrative must be nonempty")
        if len(narrative) > config.max_narrative_chars:
            raise ServiceInputError(
                "narrative_too_long",
                f"narrative exceeds {config.max_narrative_chars} characters",
            )

        effective_top_n = top_n if top_n is not None else config.top_n
        if not 1 <= effective_top_n <= len(registry):
            raise ServiceInputError("invalid_top_n", f"top_n must be in [1, {len(registry)}]")

        if mode is not None and mode not in ("chain", "direct"):
            raise ServiceInputError("invalid_mode", "mode must be 'chain' or 'direct'")
        effective_k: int | None
        if mode == "direct":
            effective_k = None
        else:
            effective_k = k if k is not None else config.chain_k
            if mode == "chain" and effective_k is None:
                effective_k = 5
        if effective_k is not None and not 1 <= effective_k < len(registry):
            raise ServiceInputError("invalid_k", f"k must be in [1, {len(registry) - 1}]")

        try:
            pil_image = Image.open(io.BytesIO(payload))
            pil_image.load()
        except Exception:
            raise ServiceInputError("unreadable_image", "could not decode the uploaded image")

        fusion_config = FusionConfig(top_n=effective_top_n, chain_k=effective_k)
        result = diagnose(
            pil_image,
            narrative,
            vision_model,
            text_model,
            fusion_config,
            sample_id=image.filename or "upload",
            clock=clock,
        )
        return JSONResponse(content=result.to_dict(registry))

    if config.static_dir:
        from starlette.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=config.static_dir, html=True), name="console")

    return app


def serve(config: ServiceConfig, host: str = "127.0.0.1", port: int = 8000) -> None:
    import uvicorn

    uvicorn.run(create_app(config), host=host, port=port, log_level="info")
