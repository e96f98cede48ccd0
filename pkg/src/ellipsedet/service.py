"""Local HTTP service backing the annotation workflow.

Serves images and their label records from a plain directory layout::

    root/
      images/   one .png / .jpg / .jpeg per image (id = file stem)
      labels/   one <id>.json per annotated image (created on demand)

Label writes are atomic (temp file + rename) and serialized per image
id, so concurrent saves settle last-write-wins and a crash mid-write
can never corrupt an existing record. Reads need no locks: they only
ever see complete files.
"""
from __future__ import annotations

import os
import tempfile
import threading
from pathlib import Path

from fastapi import FastAPI, HTTPException, Request, Response
from fastapi.responses import FileResponse, PlainTextResponse
from fastapi.staticfiles import StaticFiles
from PIL import Image

from .dataset import LabelRecord, labels_to_json, parse_labels

__all__ = ["DEFAULT_CLASSES", "create_app", "serve"]

DEFAULT_CLASSES = ("car", "bus", "truck")
_IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")
_MEDIA_TYPES = {".png": "image/png", ".jpg": "image/jpeg", ".jpeg": "image/jpeg"}


def _image_path(images_dir: Path, image_id: str) -> Path | None:
    if "/" in image_id or "\\" in image_id or image_id in ("", ".", ".."):
        return None
    for suffix in _IMAGE_SUFFIXES:
        p = images_dir / f"{image_id}{suffix}"
        if p.is_file():
            return p
    return None


def _image_size(path: Path) -> tuple[int, int]:
    with Image.open(path) as im:
        return im.size  # (width, height); header read only


def atomic_write_text(path: Path, text: str) -> None:
    """Write via a sibling temp file and rename into place."""
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as f:
            f.write(text)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def create_app(root_dir, classes=DEFAULT_CLASSES, frontend_dir=None) -> FastAPI:
    """Build the annotation API over ``root_dir``.

    ``root_dir`` must already contain an images/ directory; labels/ is
    created when missing. When ``frontend_dir`` exists its static files
    are mounted at the web root (the API lives under /api).
    """
    root = Path(root_dir)
    images_dir = root / "images"
    if not images_dir.is_dir():
        raise ValueError(f"no images directory under {root}")
    labels_dir = root / "labels"
    labels_dir.mkdir(exist_ok=True)
    classes = tuple(classes)

    app = FastAPI(title="ellipse annotation service")
    write_locks: dict[str, threading.Lock] = {}
    locks_guard = threading.Lock()

    def lock_for(image_id: str) -> threading.Lock:
        with locks_guard:
            return write_locks.setdefault(image_id, threading.Lock())

    def require_image(image_id: str) -> Path:
        p = _image_path(images_dir, image_id)
        if p is None:
            raise HTTPException(status_code=404, detail=f"unknown image id {image_id!r}")
        return p

    @app.get("/api/images")
    def list_images():
        rows = []
        for p in sorted(images_dir.iterdir()):
            if p.suffix.lower() in _IMAGE_SUFFIXES and p.is_file():
                width, height = _image_size(p)
                rows.append({"image_id": p.stem, "width": width, "height": height})
        return {"images": rows}

    @app.get("/api/images/{image_id}")
    def get_image(image_id: str):
        p = require_image(image_id)
        return FileResponse(p, media_type=_MEDIA_TYPES[p.suffix.lower()])

    @app.get("/api/labels/{image_id}", response_class=PlainTextResponse)
    def get_labels(image_id: str):
        p = require_image(image_id)
        label_path = labels_dir / f"{image_id}.json"
        if label_path.is_file():
            text = label_path.read_text(encoding="utf-8")
            try:
                parse_labels(text)  # persisted records must still validate
            except ValueError as err:
                raise HTTPException(status_code=500, detail=f"stored labels invalid: {err}")
            return Response(content=text, media_type="application/json")
        width, height = _image_size(p)
        empty = LabelRecord(image_id=image_id, width=width, height=height)
        return Response(content=labels_to_json(empty), media_type="application/json")

    @app.put("/api/labels/{image_id}")
    async def put_labels(image_id: str, request: Request):
        p = require_image(image_id)
        body = await request.body()
        try:
            record = parse_labels(body.decode("utf-8"))
        except (ValueError, UnicodeDecodeError) as err:
            raise HTTPException(status_code=422, detail=str(err))
        if record.image_id != image_id:
            raise HTTPException(
                status_code=422,
                detail=f"record image_id {record.image_id!r} does not match path id {image_id!r}",
            )
        width, height = _image_size(p)
        if (record.width, record.height) != (width, height):
            raise HTTPException(
                status_code=422,
                detail=f"record size {record.width}x{record.height} does not match "
                f"image size {width}x{height}",
            )
        unknown = sorted({o.class_name for o in record.objects} - set(classes))
        if unknown:
            idx = next(i for i, o in enumerate(record.objects) if o.class_name in unknown)
            raise HTTPException(
                status_code=422, detail=f"object {idx}: unknown class {record.objects[idx].class_name!r}"
            )
        text = labels_to_json(record)
        with lock_for(image_id):
            atomic_write_text(labels_dir / f"{image_id}.json", text)
        return {"saved": True, "image_id": image_id, "objects": len(record.objects)}

    @app.get("/api/classes")
    def get_classes():
        return {"classes": list(classes)}

    if frontend_dir is not None and Path(frontend_dir).is_dir():
        app.mount("/", StaticFiles(directory=frontend_dir, html=True), name="frontend")
    return app


def serve(root_dir, port: int = 8008, host: str = "127.0.0.1", classes=DEFAULT_CLASSES,
          frontend_dir=None) -> None:
    """Run the annotation service until interrupted."""
    import uvicorn

    app = create_app(root_dir, classes=classes, frontend_dir=frontend_dir)
    uvicorn.run(app, host=host, port=port, log_level="warning")
