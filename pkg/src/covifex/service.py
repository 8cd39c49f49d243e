"""HTTP prediction service: upload a chest X-ray/CT image, get a
positive/negative call with probability, model provenance, per-stage
timings, and a fixed non-diagnostic disclaimer.

Endpoints: POST /api/v1/predict (multipart field ``image``),
GET /api/v1/model, GET /api/v1/health. All non-200 responses use the
envelope {"error": {"code": ..., "message": ...}}.
"""
from __future__ import annotations

import json
import logging
import time
import uuid
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from fastapi import FastAPI, File, Request, UploadFile
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from .ensemble import TrainedModel, model_load, predict_proba
from .errors import ValidationError
from .extract import ExtractorBackend, StubBackend, TorchScriptBackend
from .preprocess import PreprocessConfig, decode_image_bytes, preprocess_pipeline

log = logging.getLogger("covifex.service")

DEFAULT_MAX_UPLOAD_BYTES = 20 * 1024 * 1024

LABEL_POSITIVE = "COVID-19 Positive"
LABEL_NEGATIVE = "COVID-19 Negative"

DISCLAIMER = (
    "Research prototype. This output has not been clinically validated and "
    "is not approved for diagnostic use; it may only serve as an aid for a "
    "qualified medical imaging specialist."
)

PREDICTION_RESPONSE_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "PredictionResponse",
    "type": "object",
    "required": ["label", "probability_positive", "model", "timing_ms", "disclaimer"],
    "properties": {
        "label": {"type": "string", "enum": [LABEL_POSITIVE, LABEL_NEGATIVE]},
        "probability_positive": {"type": "number", "minimum": 0.0, "maximum": 1.0},
        "model": {
            "type": "object",
            "required": ["extractor", "classifier"],
            "properties": {
                "extractor": {"type": "string"},
                "classifier": {"type": "string"},
                "provenance": {"type": "object"},
            },
        },
        "timing_ms": {
            "type": "object",
            "required": ["decode", "preprocess", "extract", "predict"],
            "additionalProperties": {"type": "number", "minimum": 0.0},
        },
        "request_id": {"type": "string"},
        "disclaimer": {"type": "string"},
    },
}


class ServiceError(Exception):
    def __init__(self, status: int, code: str, message: str):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message


def _error_response(status: int, code: str, message: str) -> JSONResponse:
    return JSONResponse(
        status_code=status, content={"error": {"code": code, "message": message}}
    )


def backend_from_manifest(
    manifest: dict, extractor_model_path: Optional[str | Path] = None
) -> ExtractorBackend:
    """Rebuild the feature extractor a deployed model was trained behind."""
    info = manifest.get("backend") or {}
    pp = manifest.get("preprocess") or {}
    input_hw = (pp.get("target_height", 224), pp.get("target_width", 224))
    kind = info.get("type", "unspecified")
    if extractor_model_path is not None:
        return TorchScriptBackend(extractor_model_path, input_hw=input_hw)
    if kind == "torchscript" and info.get("model_path"):
        return TorchScriptBackend(info["model_path"], input_hw=input_hw)
    if kind == "stub":
        return StubBackend(dim=int(info.get("dim", 64)), seed=int(info.get("seed", 0)))
    raise ValidationError(
        "manifest does not say how to rebuild the feature extractor; "
        "pass an extractor model file"
    )


def _preprocess_config(manifest: dict) -> PreprocessConfig:
    pp = manifest.get("preprocess") or {}
    return PreprocessConfig(
        target_height=pp.get("target_height", 224),
        target_width=pp.get("target_width", 224),
        apply_mean_subtraction=pp.get("apply_mean_subtraction", True),
        mean_rgb=tuple(pp.get("mean_rgb", (0.485, 0.456, 0.406))),
        normalize_min_max=pp.get("normalize_min_max", True),
    )


@dataclass
class PredictionEngine:
    """Read-only bundle of model + extractor + preprocessing, shared across
    requests. Immutable after construction, so concurrent reads are safe."""

    model: TrainedModel
    backend: ExtractorBackend
    preprocess: PreprocessConfig
    manifest: dict

    @staticmethod
    def load(
        model_path: str | Path,
        manifest_path: Optional[str | Path] = None,
        extractor_model_path: Optional[str | Path] = None,
    ) -> "PredictionEngine":
        model_path = Path(model_path)
        if manifest_path is None:
            sibling = model_path.with_name(model_path.stem + ".manifest.json")
            manifest = json.loads(sibling.read_text()) if sibling.exists() else {}
        else:
            manifest = json.loads(Path(manifest_path).read_text())
        model = model_load(model_path)
        backend = backend_from_manifest(manifest, extractor_model_path)
        if backend.output_dim != model.feature_dim:
            raise ValidationError(
                f"extractor produces {backend.output_dim}-wide vectors but the "
                f"model expects {model.feature_dim}"
            )
        return PredictionEngine(
            model=model,
            backend=backend,
            preprocess=_preprocess_config(manifest),
            manifest=manifest,
        )

    def metadata(self) -> dict:
        return {
            "extractor": self.manifest.get("extractor", "unknown"),
            "classifier": self.manifest.get("classifier", self.model.kind.value),
            "feature_dim": self.model.feature_dim,
            "provenance": {
                "grid_seed": self.manifest.get("grid_seed"),
                "k": self.manifest.get("k"),
                "report_checksum": self.manifest.get("report_checksum"),
                "metrics": self.manifest.get("metrics"),
            },
        }

    def predict_image(self, payload: bytes, request_id: str) -> dict:
        timing: dict[str, float] = {}

        t0 = time.perf_counter()
        try:
            raw = decode_image_bytes(payload)
        except ValidationError as exc:
            raise ServiceError(400, "BAD_IMAGE", str(exc)) from exc
        timing["decode"] = (time.perf_counter() - t0) * 1000.0

        t0 = time.perf_counter()
        conditioned = preprocess_pipeline(raw, self.preprocess)
        timing["preprocess"] = (time.perf_counter() - t0) * 1000.0

        t0 = time.perf_counter()
        features = self.backend.run([conditioned], ids=None)[0]
        timing["extract"] = (time.perf_counter() - t0) * 1000.0

        t0 = time.perf_counter()
        proba = predict_proba(self.model, np.asarray(features, dtype=np.float64))
        timing["predict"] = (time.perf_counter() - t0) * 1000.0

        p_pos = float(proba[1])
        return {
            "label": LABEL_POSITIVE if p_pos > 0.5 else LABEL_NEGATIVE,
            "probability_positive": p_pos,
            "model": self.metadata(),
            "timing_ms": timing,
            "request_id": request_id,
            "disclaimer": DISCLAIMER,
        }


def create_app(
    model_path: Optional[str | Path] = None,
    manifest_path: Optional[str | Path] = None,
    extractor_model_path: Optional[str | Path] = None,
    max_upload_bytes: int = DEFAULT_MAX_UPLOAD_BYTES,
    cors_origins: tuple[str, ...] = ("*",),
    audit_dir: Optional[str | Path] = None,
) -> FastAPI:
    """Build the service app; with no model path it boots in the 'starting'
    state and answers predictions with 503 until one is loaded."""
    app = FastAPI(title="covifex", version="1")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=list(cors_origins),
        allow_methods=["*"],
        allow_headers=["*"],
    )
    app.state.engine = None
    app.state.audit_dir = Path(audit_dir) if audit_dir else None
    if model_path is not None:
        app.state.engine = PredictionEngine.load(model_path, manifest_path, extractor_model_path)

    @app.exception_handler(ServiceError)
    async def service_error_handler(_request: Request, exc: ServiceError):
        return _error_response(exc.status, exc.code, exc.message)

    @app.get("/api/v1/health")
    async def health():
        loaded = app.state.engine is not None
        return {"status": "ok" if loaded else "starting", "model_loaded": loaded}

    @app.get("/api/v1/model")
    async def model_metadata():
        if app.state.engine is None:
            raise ServiceError(503, "MODEL_NOT_LOADED", "no model is loaded yet")
        return app.state.engine.metadata()

    @app.get("/api/v1/schema/prediction")
    async def prediction_schema():
        return PREDICTION_RESPONSE_SCHEMA

    @app.post("/api/v1/predict")
    async def predict_endpoint(request: Request, image: UploadFile = File(...)):
        if app.state.engine is None:
            raise ServiceError(503, "MODEL_NOT_LOADED", "no model is loaded yet")
        request_id = uuid.uuid4().hex
        declared = request.headers.get("content-length")
        if declared and declared.isdigit() and int(declared) > max_upload_bytes + 4096:
            raise ServiceError(413, "PAYLOAD_TOO_LARGE", f"upload exceeds {max_upload_bytes} bytes")
        payload = await image.read()
        if len(payload) > max_upload_bytes:
            raise ServiceError(413, "PAYLOAD_TOO_LARGE", f"upload exceeds {max_upload_bytes} bytes")
        response = app.state.engine.predict_image(payload, request_id)
        if app.state.audit_dir is not None:
            app.state.audit_dir.mkdir(parents=True, exist_ok=True)
            (app.state.audit_dir / f"{request_id}.png").write_bytes(payload)
        log.info(
            "request %s: %s p=%.4f decode=%.1fms extract=%.1fms",
            request_id,
            response["label"],
            response["probability_positive"],
            response["timing_ms"]["decode"],
            response["timing_ms"]["extract"],
        )
        return response

    return app
