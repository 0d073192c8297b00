"""HTTP service hosting an active model: real-time classification,
consent-gated image persistence, dataset export, and model management."""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

from fastapi import FastAPI, File, Form, HTTPException, Response, UploadFile
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel

from . import ferw
from .errors import DecodeError, FerkitError, ShapeError, WeightFormatError
from .labels import EMOTION_NAMES, EmotionLabel
from .model import Model
from .preprocess import CropBox, pipeline
from .store import ImageRecord, ImageStore, content_id, utc_now

DEFAULT_MAX_UPLOAD = 10 * 1024 * 1024


@dataclass
class ServiceConfig:
    storage_root: Path
    max_upload_bytes: int = DEFAULT_MAX_UPLOAD
    allowed_origin: str = "*"


class ModelRegistry:
    """Installed FERW files under their content hashes, with one active
    model served via an atomic reference swap."""

    def __init__(self, root: Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.index_path = self.root / "registry.json"
        self._entries: dict[str, dict] = {}
        self._active: tuple[str, Model] | None = None
        self._lock = threading.Lock()
        if self.index_path.exists():
            self._entries = json.loads(self.index_path.read_text())

    def _save_index(self) -> None:
        self.index_path.write_text(json.dumps(self._entries, indent=2))

    def install(self, data: bytes, name: str = "") -> str:
        """Validate and store a FERW payload; idempotent by content hash."""
        ferw.load_weights(data)  # full validation before anything is written
        model_id = content_id(data)
        with self._lock:
            path = self.root / f"{model_id}.ferw"
            if not path.exists():
                path.write_bytes(data)
            if model_id not in self._entries:
                self._entries[model_id] = {
                    "name": name or model_id[:12],
                    "installed_at": datetime.now(timezone.utc).isoformat(),
                }
                self._save_index()
        return model_id

    def activate(self, model_id: str) -> None:
        with self._lock:
            if model_id not in self._entries:
                raise KeyError(model_id)
            model = ferw.load_weights(self.root / f"{model_id}.ferw")
            self._active = (model_id, model)

    def active(self) -> tuple[str, Model] | None:
        return self._active

    def entries(self) -> list[dict]:
        active_id = self._active[0] if self._active else None
        return [
            {"model_id": mid, **info, "active": mid == active_id}
            for mid, info in self._entries.items()
        ]


class TopEntry(BaseModel):
    label: str
    confidence: float


class ClassifyResponse(BaseModel):
    top: list[TopEntry]
    distribution: dict[str, float]
    model_id: str
    stored: bool
    record_id: str | None


class HealthResponse(BaseModel):
    status: str
    active_model_id: str | None
    stored_image_count: int


class ModelEntryResponse(BaseModel):
    model_id: str
    name: str
    installed_at: str
    active: bool


class InstallResponse(BaseModel):
    model_id: str
    active: bool


def _parse_meta(meta: str | None) -> dict:
    if not meta:
        return {}
    try:
        obj = json.loads(meta)
    except json.JSONDecodeError as exc:
        raise HTTPException(status_code=400, detail=f"meta is not valid JSON: {exc}")
    if not isinstance(obj, dict):
        raise HTTPException(status_code=400, detail="meta must be a JSON object")
    return obj


def _parse_crop(obj: dict) -> CropBox | None:
    crop = obj.get("crop")
    if crop is None:
        return None
    try:
        return CropBox(x=int(crop["x"]), y=int(crop["y"]), w=int(crop["w"]), h=int(crop["h"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise HTTPException(status_code=400, detail=f"invalid crop box: {exc}")


def create_app(config: ServiceConfig) -> FastAPI:
    root = Path(config.storage_root)
    store = ImageStore(root / "images")
    registry = ModelRegistry(root / "models")

    app = FastAPI(title="ferkit", version="0.1.0")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=[config.allowed_origin],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    app.state.store = store
    app.state.registry = registry
    app.state.config = config

    @app.post("/api/classify", response_model=ClassifyResponse)
    async def classify(image: UploadFile = File(...), meta: str | None = Form(None)):
        data = await image.read()
        if len(data) > config.max_upload_bytes:
            raise HTTPException(status_code=413, detail="image exceeds the upload size limit")
        active = registry.active()
        if active is None:
            raise HTTPException(status_code=503, detail="no active model")
        model_id, model = active

        options = _parse_meta(meta)
        crop = _parse_crop(options)
        consent = bool(options.get("consent", False))
        source = options.get("source", "upload")
        if source not in ("upload", "webcam"):
            raise HTTPException(status_code=400, detail=f"invalid source {source!r}")
        user_label = options.get("user_label")

        try:
            tensor = pipeline(data, crop)
        except DecodeError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        except (ValueError, ShapeError) as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        result = model.predict_topk(tensor, k=3)

        record_id = None
        if consent:
            record = ImageRecord(
                id=content_id(data),
                captured_at=utc_now(),
                source=source,
                predictions=[(label.label_name, conf) for label, conf in result.top],
                model_id=model_id,
                consent=True,
                crop=crop,
                user_label=None if user_label is None else EmotionLabel.from_name(user_label),
            )
            try:
                record_id = store.put(record, data)
            except FerkitError as exc:
                raise HTTPException(status_code=500, detail=str(exc))

        return ClassifyResponse(
            top=[TopEntry(label=l.label_name, confidence=c) for l, c in result.top],
            distribution={
                name: float(result.distribution[i]) for i, name in enumerate(EMOTION_NAMES)
            },
            model_id=model_id,
            stored=record_id is not None,
            record_id=record_id,
        )

    @app.post("/api/models", response_model=InstallResponse)
    async def install_model(file: UploadFile = File(...)):
        data = await file.read()
        try:
            model_id = registry.install(data, name=file.filename or "")
        except (WeightFormatError, ShapeError, FerkitError) as exc:
            raise HTTPException(status_code=400, detail=f"invalid FERW upload: {exc}")
        active = registry.active()
        return InstallResponse(model_id=model_id, active=bool(active and active[0] == model_id))

    @app.post("/api/models/{model_id}/activate", response_model=list[ModelEntryResponse])
    async def activate_model(model_id: str):
        try:
            registry.activate(model_id)
        except KeyError:
            raise HTTPException(status_code=404, detail=f"unknown model {model_id}")
        return registry.entries()

    @app.get("/api/models", response_model=list[ModelEntryResponse])
    async def list_models():
        return registry.entries()

    @app.get("/api/dataset/export")
    async def export_dataset(labeled_only: bool = False):
        archive = store.export_archive(labeled_only=labeled_only)
        return Response(
            content=archive,
            media_type="application/zip",
            headers={"Content-Disposition": "attachment; filename=dataset.zip"},
        )

    @app.get("/api/health", response_model=HealthResponse)
    async def health():
        try:
            store.check_readable()
            count = store.image_count()
        except FerkitError:
            raise HTTPException(status_code=503, detail="image store unreachable")
        active = registry.active()
        return HealthResponse(
            status="ok",
            active_model_id=active[0] if active else None,
            stored_image_count=count,
        )

    return app
