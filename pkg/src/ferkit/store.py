"""Consented image persistence: content-addressed blobs plus an append-only
metadata log, exportable in the directory-per-label dataset layout."""

from __future__ import annotations

import hashlib
import io
import json
import os
import threading
import zipfile
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from pathlib import Path

from .errors import ConsentError, FerkitError
from .labels import EmotionLabel
from .preprocess import CropBox, sniff_format


@dataclass(frozen=True)
class ImageRecord:
    """One consented capture event."""

    id: str  # lowercase hex SHA-256 of the original bytes
    captured_at: str  # UTC ISO-8601
    source: str  # "webcam" | "upload"
    predictions: list[tuple[str, float]]  # top-3 (label name, confidence)
    model_id: str
    consent: bool
    crop: CropBox | None = None
    user_label: EmotionLabel | None = None

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "captured_at": self.captured_at,
            "source": self.source,
            "predictions": [{"label": l, "confidence": c} for l, c in self.predictions],
            "model_id": self.model_id,
            "consent": self.consent,
            "crop": None if self.crop is None else
                {"x": self.crop.x, "y": self.crop.y, "w": self.crop.w, "h": self.crop.h},
            "user_label": None if self.user_label is None else self.user_label.label_name,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ImageRecord":
        crop = obj.get("crop")
        user_label = obj.get("user_label")
        return cls(
            id=obj["id"],
            captured_at=obj["captured_at"],
            source=obj["source"],
            predictions=[(p["label"], p["confidence"]) for p in obj["predictions"]],
            model_id=obj["model_id"],
            consent=obj["consent"],
            crop=None if crop is None else CropBox(**crop),
            user_label=None if user_label is None else EmotionLabel.from_name(user_label),
        )


def content_id(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def utc_now() -> str:
    return datetime.now(timezone.utc).isoformat()


class ImageStore:
    """Blob-per-hash image store with a JSONL event log.

    Blob writes are idempotent (write to a temp file, rename into place);
    log appends are single whole-line writes, so a crash leaves either a
    complete record or none.
    """

    def __init__(self, root):
        self.root = Path(root)
        self.blob_dir = self.root / "blobs"
        self.log_path = self.root / "records.jsonl"
        self.blob_dir.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    def _blob_path(self, record_id: str, ext: str) -> Path:
        return self.blob_dir / f"{record_id}.{ext}"

    def find_blob(self, record_id: str) -> Path | None:
        for ext in ("png", "jpg"):
            path = self._blob_path(record_id, ext)
            if path.exists():
                return path
        return None

    def put(self, record: ImageRecord, data: bytes) -> str:
        """Persist one consented capture; returns the record id."""
        if not record.consent:
            raise ConsentError("refusing to persist a record without consent")
        rid = content_id(data)
        if record.id != rid:
            raise FerkitError(f"record id {record.id} does not match content hash {rid}")
        fmt = sniff_format(data)
        if fmt is None:
            raise FerkitError("stored bytes must be JPEG or PNG")
        ext = "png" if fmt == "png" else "jpg"
        with self._lock:
            blob = self._blob_path(rid, ext)
            if not blob.exists():
                tmp = blob.with_suffix(blob.suffix + ".tmp")
                tmp.write_bytes(data)
                os.replace(tmp, blob)
            line = json.dumps(record.to_json()) + "\n"
            with open(self.log_path, "a", encoding="utf-8") as fh:
                fh.write(line)
                fh.flush()
                os.fsync(fh.fileno())
        return rid

    def events(self) -> list[ImageRecord]:
        """Every logged capture event, in append order."""
        if not self.log_path.exists():
            return []
        out = []
        with open(self.log_path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    out.append(ImageRecord.from_json(json.loads(line)))
        return out

    def records(self) -> list[ImageRecord]:
        """One record per unique image: latest event wins, except that a
        human label survives later unlabeled events."""
        merged: dict[str, ImageRecord] = {}
        for event in self.events():
            prev = merged.get(event.id)
            if prev is not None and event.user_label is None and prev.user_label is not None:
                event = replace(event, user_label=prev.user_label)
            merged[event.id] = event
        return list(merged.values())

    def image_count(self) -> int:
        return len({e.id for e in self.events()})

    def check_readable(self) -> None:
        if not self.root.is_dir() or not self.blob_dir.is_dir():
            raise FerkitError(f"store root {self.root} is not readable")

    def export_archive(self, labeled_only: bool = False) -> bytes:
        """Zip archive in the directory-per-label layout.

        Human-labeled records go under ``<label>/``; others under
        ``predicted/<top-1 label>/``. A ``manifest.json`` lists every
        exported record's metadata.
        """
        buf = io.BytesIO()
        exported = []
        with zipfile.ZipFile(buf, "w", zipfile.ZIP_DEFLATED) as zf:
            for record in self.records():
                if labeled_only and record.user_label is None:
                    continue
                blob = self.find_blob(record.id)
                if blob is None:
                    continue
                if record.user_label is not None:
                    arcname = f"{record.user_label.label_name}/{blob.name}"
                else:
                    top1 = record.predictions[0][0]
                    arcname = f"predicted/{top1}/{blob.name}"
                zf.writestr(arcname, blob.read_bytes())
                exported.append(record.to_json())
            zf.writestr("manifest.json", json.dumps({"records": exported}, indent=2))
        return buf.getvalue()
