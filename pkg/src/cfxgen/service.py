"""HTTP inference service over frozen checkpoints.

Endpoints (HTTP/1.1, JSON + PNG):
  GET  /health                      -> {status, classifier_checksum, bundle_checksum}
  POST /classify                    -> body: PNG; {p_normal, p_opacity, decision}
  POST /explain?frames=N            -> body: PNG; explanation JSON with base64 PNGs
  GET  /samples?split=TEST&limit=k  -> browsing index over the mounted dataset
  GET  /samples/{id}                -> one sample: label, split, base64 PNG

Models never mutate after startup; identical requests yield identical
responses. Inference is serialized behind one lock, so concurrent requests
are safe. No auth: this is a research tool meant for loopback use.
"""
from __future__ import annotations

import threading
from dataclasses import dataclass, field

import numpy as np
from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from .classifier import ClassifierModel, ProbPair
from .data import DataError, DatasetManifest, ManifestEntry, decode_image_bytes
from .explain import explain, interpolate, png_base64
from .gan import GanBundle

MAX_FRAMES = 33
MIN_FRAMES = 2


@dataclass
class ServiceState:
    classifier: ClassifierModel | None = None
    bundle: GanBundle | None = None
    manifest: DatasetManifest | None = None
    resolution: int = 0
    byte_limit: int = 5_000_000
    sample_index: list[ManifestEntry] = field(default_factory=list)
    lock: threading.Lock = field(default_factory=threading.Lock)

    @classmethod
    def create(
        cls,
        classifier: ClassifierModel,
        bundle: GanBundle,
        manifest: DatasetManifest | None = None,
        byte_limit: int = 5_000_000,
    ) -> "ServiceState":
        if not classifier.frozen:
            raise ValueError("service requires a frozen classifier")
        bundle.check_classifier(classifier)
        state = cls(
            classifier=classifier,
            bundle=bundle,
            manifest=manifest,
            resolution=classifier.config.resolution,
            byte_limit=byte_limit,
        )
        if manifest is not None:
            state.sample_index = list(manifest.entries)
        return state

    @property
    def loaded(self) -> bool:
        return self.classifier is not None and self.bundle is not None


def _probs_dict(pair: ProbPair) -> dict:
    return {"p_normal": pair.p_x, "p_opacity": pair.p_y}


def create_app(state: ServiceState) -> FastAPI:
    app = FastAPI(title="cfxgen inference service")
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )

    if state.loaded:
        print(
            f"models loaded: classifier {state.classifier.checksum()[:12]} "
            f"bundle {state.bundle.checksum()[:12]}"
        )

    async def _read_image(request: Request) -> np.ndarray | JSONResponse:
        if not state.loaded:
            return JSONResponse({"error": "models not loaded"}, status_code=503)
        body = await request.body()
        if len(body) > state.byte_limit:
            return JSONResponse(
                {"error": f"payload exceeds {state.byte_limit} bytes"}, status_code=413
            )
        if not body:
            return JSONResponse({"error": "empty body"}, status_code=400)
        try:
            return decode_image_bytes(body, state.resolution)
        except Exception:
            return JSONResponse({"error": "undecodable image"}, status_code=400)

    @app.get("/health")
    def health():
        if not state.loaded:
            return JSONResponse({"status": "loading"}, status_code=503)
        return {
            "status": "ok",
            "classifier_checksum": state.classifier.checksum(),
            "bundle_checksum": state.bundle.checksum(),
        }

    @app.post("/classify")
    async def classify(request: Request):
        pixels = await _read_image(request)
        if isinstance(pixels, JSONResponse):
            return pixels
        with state.lock:
            pair = state.classifier.predict(pixels)
        return {**_probs_dict(pair), "decision": pair.decision.value}

    @app.post("/explain")
    async def explain_endpoint(request: Request, frames: int | None = None):
        if frames is not None and not (MIN_FRAMES <= frames <= MAX_FRAMES):
            return JSONResponse(
                {"error": f"frames must be in [{MIN_FRAMES}, {MAX_FRAMES}]"}, status_code=400
            )
        pixels = await _read_image(request)
        if isinstance(pixels, JSONResponse):
            return pixels
        with state.lock:
            result = explain(state.bundle, state.classifier, pixels)
            payload = {
                "original_probs": _probs_dict(result.original_probs),
                "counterfactual_probs": _probs_dict(result.counterfactual_probs),
                "decision_pre": result.original_decision.value,
                "decision_post": result.counterfactual_decision.value,
                "flipped": result.flipped,
                "l1_proximity": result.l1_proximity,
                "counterfactual_png": png_base64(result.counterfactual_pixels),
            }
            if frames is not None:
                blend = interpolate(result.original_pixels, result.counterfactual_pixels, frames)
                frame_list = []
                for i, frame in enumerate(blend):
                    probs = state.classifier.predict(frame.astype(np.float32))
                    frame_list.append(
                        {
                            "t": i / (frames - 1),
                            "png": png_base64(frame),
                            "probs": _probs_dict(probs),
                        }
                    )
                payload["frames"] = frame_list
        return payload

    @app.get("/samples")
    def samples(split: str = "TEST", limit: int = 12):
        if state.manifest is None:
            return JSONResponse({"error": "no dataset mounted"}, status_code=503)
        matching = [e for e in state.sample_index if e.split.value == split.upper()]
        out = [{"id": e.id, "label": e.label.value} for e in matching[: max(0, limit)]]
        return {"split": split.upper(), "count": len(out), "samples": out}

    @app.get("/samples/{sample_id}")
    def sample_detail(sample_id: str):
        if state.manifest is None:
            return JSONResponse({"error": "no dataset mounted"}, status_code=503)
        for entry in state.sample_index:
            if entry.id == sample_id:
                try:
                    pixels = state.manifest.load_pixels(entry)
                except (DataError, OSError):
                    return JSONResponse({"error": "sample unreadable"}, status_code=500)
                return {
                    "id": entry.id,
                    "label": entry.label.value,
                    "split": entry.split.value,
                    "png": png_base64(pixels),
                }
        return JSONResponse({"error": f"unknown sample id {sample_id!r}"}, status_code=404)

    return app
