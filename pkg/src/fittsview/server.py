"""HTTP facade over the labeling sessions.

Endpoints are thin: datasets discovery, session lifecycle, a binary points
stream, recommendations, lasso edits, checked ticks, metrics, and label
export.  All errors are JSON objects {code, message}.  Edits to a session
are serialized through a per-session lock; reads take the same lock briefly
to snapshot consistent state.
"""

from __future__ import annotations

import struct
import threading
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse, Response
from pydantic import BaseModel
from starlette.exceptions import HTTPException as StarletteHTTPException

from . import __version__
from .clustering import estimate_angular_resolution, instances_from_labels, split_instances
from .config import EngineConfig
from .datasets import DatasetManifest, load_cloud, load_labels
from .geometry import PointCloud, Viewpoint
from .optimizer import recommend_all
from .session import (
    LabelSession,
    SessionStore,
    apply_lasso,
    mark_checked,
    new_session,
    overview_viewpoint,
    recommendation_id,
    save_session,
    session_metrics,
    recommendation_to_json,
)


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str) -> None:
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message


class ViewpointBody(BaseModel):
    target: tuple[float, float, float]
    alpha: float
    beta: float
    distance: float

    def to_viewpoint(self) -> Viewpoint:
        return Viewpoint(
            target=self.target, alpha=self.alpha, beta=self.beta, distance=self.distance
        )


class LassoBody(BaseModel):
    viewpoint: ViewpointBody
    polygon: list[tuple[float, float]]
    category: int
    mode: str


class SessionBody(BaseModel):
    dataset: str


class CheckedBody(BaseModel):
    recommendation_id: str


@dataclass
class _SessionSlot:
    session: LabelSession
    lock: threading.RLock = field(default_factory=threading.RLock)


def discover_datasets(root: str | Path) -> dict[str, Path]:
    """Map dataset name to manifest path for every manifest under root."""
    root = Path(root)
    found: dict[str, Path] = {}
    if not root.exists():
        return found
    for manifest_path in sorted(root.glob("*/manifest.json")):
        try:
            manifest = DatasetManifest.from_file(manifest_path)
        except ValueError:
            continue
        found[manifest.name] = manifest_path
    return found


def create_app(
    datasets_root: str | Path,
    config: EngineConfig | None = None,
    store: SessionStore | None = None,
) -> FastAPI:
    config = config or EngineConfig()
    app = FastAPI(title="fittsview", version=__version__)
    sessions: dict[str, _SessionSlot] = {}
    registry_lock = threading.Lock()

    @app.exception_handler(ApiError)
    async def on_api_error(_request: Request, exc: ApiError) -> JSONResponse:
        return JSONResponse(
            status_code=exc.status, content={"code": exc.code, "message": exc.message}
        )

    @app.exception_handler(StarletteHTTPException)
    async def on_http_error(_request: Request, exc: StarletteHTTPException) -> JSONResponse:
        return JSONResponse(
            status_code=exc.status_code,
            content={"code": "http-error", "message": str(exc.detail)},
        )

    @app.exception_handler(RequestValidationError)
    async def on_validation_error(
        _request: Request, exc: RequestValidationError
    ) -> JSONResponse:
        return JSONResponse(
            status_code=400, content={"code": "bad-request", "message": str(exc)}
        )

    def slot_for(session_id: str) -> _SessionSlot:
        with registry_lock:
            slot = sessions.get(session_id)
        if slot is None:
            raise ApiError(404, "unknown-session", f"no session {session_id}")
        return slot

    def persist(session: LabelSession) -> None:
        if store is not None:
            save_session(store, session)

    @app.get("/health")
    def health() -> dict:
        return {"name": "fittsview", "version": __version__}

    @app.get("/datasets")
    def list_datasets() -> list[dict]:
        found = discover_datasets(datasets_root)
        listing = []
        for name, manifest_path in found.items():
            manifest = DatasetManifest.from_file(manifest_path)
            listing.append(
                {
                    "name": name,
                    "categories": {str(k): v for k, v in sorted(manifest.categories.items())},
                    "has_ground_truth": manifest.ground_truth_label_path is not None,
                }
            )
        return listing

    @app.post("/sessions")
    def create_session(body: SessionBody) -> dict:
        found = discover_datasets(datasets_root)
        manifest_path = found.get(body.dataset)
        if manifest_path is None:
            raise ApiError(404, "unknown-dataset", f"no dataset named {body.dataset!r}")
        manifest = DatasetManifest.from_file(manifest_path)
        try:
            cloud = load_cloud(manifest)
        except ValueError as exc:
            raise ApiError(422, "bad-dataset", str(exc)) from exc
        truth = None
        if manifest.ground_truth_label_path is not None:
            truth = load_labels(manifest.ground_truth_label_path, len(cloud))

        if cloud.instance_labels is not None and cloud.semantic_labels is not None:
            instances = instances_from_labels(cloud)
        elif cloud.semantic_labels is not None:
            theta = manifest.angular_resolution
            if theta is None:
                theta = estimate_angular_resolution(cloud).theta
            instances = split_instances(
                cloud,
                theta,
                min_pts=config.min_pts,
                background_categories=manifest.background_category_ids(),
                eps_factor=config.eps_factor,
            )
        else:
            instances = None

        categories = dict(manifest.categories)
        categories.setdefault(0, "unlabeled")
        excluded = {
            cid
            for cid, name in categories.items()
            if name in set(config.excluded_categories)
        }
        recommendations = []
        if instances is not None:
            recommendations = recommend_all(
                cloud,
                instances,
                grid=config.grid(),
                viewport=config.viewport(),
                gap_weight=config.gap_weight,
                size_cutoff=config.size_cutoff,
                excluded_categories=excluded,
                min_distance=config.min_camera_distance,
                workers=config.workers,
            )
        session = new_session(
            dataset_name=body.dataset,
            cloud=cloud,
            categories=categories,
            viewport=config.viewport(),
            grid=config.grid(),
            recommendations=recommendations,
            truth_labels=truth,
            manifest_path=str(manifest_path),
            gap_weight=config.gap_weight,
        )
        with registry_lock:
            sessions[session.session_id] = _SessionSlot(session=session)
        persist(session)
        overview = overview_viewpoint(cloud)
        return {
            "session_id": session.session_id,
            "dataset": body.dataset,
            "point_count": len(cloud),
            "categories": {str(k): v for k, v in sorted(categories.items())},
            "unlabeled_category": session.unlabeled_category,
            "recommendation_count": len(recommendations),
            "overview": {
                "target": list(overview.target),
                "alpha": overview.alpha,
                "beta": overview.beta,
                "distance": overview.distance,
            },
            "viewport": {
                "width_px": session.viewport.width_px,
                "height_px": session.viewport.height_px,
                "vertical_fov_rad": session.viewport.vertical_fov_rad,
                "dot_radius_px": session.viewport.dot_radius_px,
            },
        }

    @app.get("/sessions/{session_id}/points")
    def points(session_id: str) -> Response:
        slot = slot_for(session_id)
        with slot.lock:
            cloud = slot.session.cloud
            labels = slot.session.labels.copy()
        blob = (
            struct.pack("<I", len(cloud))
            + cloud.points.astype("<f4").tobytes()
            + labels.astype("<u4").tobytes()
        )
        return Response(content=blob, media_type="application/octet-stream")

    @app.get("/sessions/{session_id}/recommendations")
    def recommendations(session_id: str) -> list[dict]:
        slot = slot_for(session_id)
        with slot.lock:
            return [recommendation_to_json(rec) for rec in slot.session.recommendations]

    @app.post("/sessions/{session_id}/lasso")
    def lasso(session_id: str, body: LassoBody) -> dict:
        slot = slot_for(session_id)
        with slot.lock:
            try:
                changed = apply_lasso(
                    slot.session,
                    body.viewpoint.to_viewpoint(),
                    body.polygon,
                    body.category,
                    body.mode,
                )
            except ValueError as exc:
                raise ApiError(422, "bad-lasso", str(exc)) from exc
            persist(slot.session)
            return {
                "changed": changed,
                "checked": sorted(slot.session.checked),
                "edit_count": len(slot.session.edits),
            }

    @app.post("/sessions/{session_id}/checked")
    def checked(session_id: str, body: CheckedBody) -> dict:
        slot = slot_for(session_id)
        with slot.lock:
            try:
                mark_checked(slot.session, body.recommendation_id)
            except ValueError as exc:
                raise ApiError(404, "unknown-recommendation", str(exc)) from exc
            persist(slot.session)
            return {"checked": sorted(slot.session.checked)}

    @app.get("/sessions/{session_id}/metrics")
    def metrics(session_id: str) -> dict:
        slot = slot_for(session_id)
        with slot.lock:
            return session_metrics(slot.session)

    @app.get("/sessions/{session_id}/export")
    def export(session_id: str) -> Response:
        slot = slot_for(session_id)
        with slot.lock:
            blob = slot.session.labels.astype("<u4").tobytes()
        return Response(content=blob, media_type="application/octet-stream")

    @app.get("/sessions/{session_id}/overview")
    def overview(session_id: str) -> dict:
        slot = slot_for(session_id)
        with slot.lock:
            vp = overview_viewpoint(slot.session.cloud)
        return {
            "target": list(vp.target),
            "alpha": vp.alpha,
            "beta": vp.beta,
            "distance": vp.distance,
        }

    return app
