"""HTTP review service for the human-in-the-loop curation step.

Read-mostly JSON API over a faceset manifest: browse records, serve (thumb)
images, record accept/reject decisions, and re-gate live as thresholds move.
All manifest writes funnel through one lock and are persisted atomically, so
decisions survive restarts.
"""
from __future__ import annotations

import io
import threading
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.responses import FileResponse, JSONResponse, Response
from fastapi.staticfiles import StaticFiles
from PIL import Image

from .curation import FacesetManifest, load_manifest, regate, save_manifest

WRITE_LOCK_TIMEOUT_S = 2.0
THUMB_MAX_W = 1024


def _record_view(record) -> dict:
    view = record.to_dict()
    view.pop("landmarks", None)
    view["thumbnail_url"] = f"/api/images/{record.id}?w=192"
    view["image_url"] = f"/api/images/{record.id}"
    return view


def _error(status_code: int, error: str, detail: str) -> JSONResponse:
    return JSONResponse(status_code=status_code,
                        content={"error": error, "detail": detail})


def create_app(manifest_path: str | Path, images_root: str | Path = ".",
               frontend_dir: str | Path | None = None) -> FastAPI:
    manifest_path = Path(manifest_path)
    images_root = Path(images_root)
    app = FastAPI(title="swapforge review")
    state = {"manifest": load_manifest(manifest_path)}
    write_lock = threading.Lock()

    def manifest() -> FacesetManifest:
        return state["manifest"]

    def persist() -> None:
        save_manifest(manifest(), manifest_path)

    @app.get("/api/records")
    def list_records(status: str | None = None, reason: str | None = None,
                     offset: int = 0, limit: int = 500):
        records = manifest().records
        if status:
            records = [r for r in records if r.status == status]
        if reason:
            records = [r for r in records if r.reject_reason == reason]
        page = records[offset:offset + limit]
        return {"total": len(records), "offset": offset,
                "records": [_record_view(r) for r in page]}

    @app.get("/api/records/{record_id}")
    def get_record(record_id: str):
        try:
            return _record_view(manifest().record(record_id))
        except KeyError:
            return _error(404, "not_found", f"no record {record_id!r}")

    @app.get("/api/images/{record_id}")
    def get_image(record_id: str, w: int | None = None):
        try:
            record = manifest().record(record_id)
        except KeyError:
            return _error(404, "not_found", f"no record {record_id!r}")
        path = images_root / record.image_path
        if not path.exists():
            return _error(404, "not_found", f"image file missing for {record_id!r}")
        if w is None:
            return FileResponse(path, media_type="image/png")
        w = max(8, min(int(w), THUMB_MAX_W))
        with Image.open(path) as im:
            im = im.convert("RGB")
            scale = w / im.width
            thumb = im.resize((w, max(1, round(im.height * scale))), Image.BILINEAR)
            buf = io.BytesIO()
            thumb.save(buf, format="PNG")
        return Response(content=buf.getvalue(), media_type="image/png")

    @app.post("/api/records/{record_id}/decision")
    async def post_decision(record_id: str, request: Request):
        body = await request.json()
        status = body.get("status")
        if status not in ("accepted", "rejected", "pending"):
            return _error(400, "bad_request",
                          "status must be accepted, rejected or pending")
        if not write_lock.acquire(timeout=WRITE_LOCK_TIMEOUT_S):
            return _error(409, "busy", "manifest writer is busy; retry")
        try:
            try:
                record = manifest().record(record_id)
            except KeyError:
                return _error(404, "not_found", f"no record {record_id!r}")
            record.status = status
            record.reject_reason = "manual" if status == "rejected" else "none"
            persist()
            return _record_view(record)
        finally:
            write_lock.release()

    @app.put("/api/thresholds")
    async def put_thresholds(request: Request):
        body = await request.json()
        allowed = {"blur_min", "yaw_max", "pitch_max", "size_min", "dedup_hamming_max"}
        unknown = set(body) - allowed
        if unknown:
            return _error(400, "bad_request", f"unknown threshold fields: {sorted(unknown)}")
        if not write_lock.acquire(timeout=WRITE_LOCK_TIMEOUT_S):
            return _error(409, "busy", "manifest writer is busy; retry")
        try:
            m = manifest()
            for key, value in body.items():
                setattr(m.thresholds, key,
                        int(value) if key == "dedup_hamming_max" else float(value))
            regate(m)
            persist()
            return {"thresholds": m.thresholds.to_dict(), "counts": m.counts()}
        finally:
            write_lock.release()

    @app.get("/api/summary")
    def summary():
        m = manifest()
        counts = m.counts()
        return {
            "identity": m.identity,
            "thresholds": m.thresholds.to_dict(),
            "kept_clusters": sorted(m.kept_clusters),
            "counts": counts,
            "kept_band_ok": 4000 <= counts["kept"] <= 8000,
        }

    if frontend_dir is not None and Path(frontend_dir).is_dir():
        app.mount("/", StaticFiles(directory=frontend_dir, html=True), name="ui")

    return app


def serve(manifest_path: str | Path, images_root: str | Path, port: int = 8080,
          frontend_dir: str | Path | None = None) -> None:  # pragma: no cover
    import uvicorn

    app = create_app(manifest_path, images_root, frontend_dir=frontend_dir)
    uvicorn.run(app, host="127.0.0.1", port=port)
