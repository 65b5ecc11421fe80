"""Label-editing sessions: lasso edits on a projected cloud, an append-only
edit log, viewpoint bookkeeping, and crash-safe persistence.

A session owns working labels for one cloud.  Every lasso arrives as a
polygon in pixel space together with the viewpoint it was drawn from; the
server projects the cloud through that viewpoint and resolves membership
itself, so selection is canonical no matter what client drew it.  The edit
log carries everything needed to replay the labels from the initial state,
which is the integrity invariant persistence checks against.
"""

from __future__ import annotations

import base64
import hashlib
import json
import math
import os
import time
import uuid
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .geometry import PointCloud, Viewpoint, Viewport, project_points
from .lasso_cost import InfeasibleReason, LassoCostEstimate
from .optimizer import GridSpec, ViewpointRecommendation, bounding_diagonal

MODE_LABEL = "label"
MODE_ERASE = "erase"
UNLABELED_CATEGORY = 0


class IntegrityError(Exception):
    """A persisted session failed its checksum or structural checks."""


@dataclass(frozen=True)
class LassoEdit:
    seq: int
    timestamp: float
    target: tuple[float, float, float]
    alpha: float
    beta: float
    distance: float
    polygon: tuple[tuple[float, float], ...]
    category: int
    mode: str
    changed: int


@dataclass
class LabelSession:
    session_id: str
    dataset_name: str
    cloud: PointCloud
    categories: dict[int, str]
    viewport: Viewport
    grid: GridSpec
    initial_labels: np.ndarray
    labels: np.ndarray
    recommendations: list[ViewpointRecommendation] = field(default_factory=list)
    edits: list[LassoEdit] = field(default_factory=list)
    checked: set[str] = field(default_factory=set)
    truth_labels: np.ndarray | None = None
    manifest_path: str | None = None
    gap_weight: float = 1.0
    unlabeled_category: int = UNLABELED_CATEGORY

    def recommendation_ids(self) -> list[str]:
        return [recommendation_id(rec) for rec in self.recommendations]


def recommendation_id(rec: ViewpointRecommendation) -> str:
    return f"{rec.category}:{rec.instance_id}"


def new_session(
    dataset_name: str,
    cloud: PointCloud,
    categories: dict[int, str],
    viewport: Viewport,
    grid: GridSpec,
    recommendations: list[ViewpointRecommendation] | None = None,
    truth_labels: np.ndarray | None = None,
    manifest_path: str | None = None,
    gap_weight: float = 1.0,
) -> LabelSession:
    """Create a session whose working labels start from the cloud's
    semantic labels, or all-unlabeled when the cloud has none."""
    if cloud.semantic_labels is not None:
        initial = cloud.semantic_labels.copy()
    else:
        initial = np.full(len(cloud), UNLABELED_CATEGORY, dtype=np.uint32)
    return LabelSession(
        session_id=uuid.uuid4().hex,
        dataset_name=dataset_name,
        cloud=cloud,
        categories=dict(categories),
        viewport=viewport,
        grid=grid,
        initial_labels=initial,
        labels=initial.copy(),
        recommendations=list(recommendations or []),
        truth_labels=truth_labels,
        manifest_path=manifest_path,
        gap_weight=gap_weight,
    )


def polygon_mask(points_px: np.ndarray, polygon: np.ndarray) -> np.ndarray:
    """Even-odd point-in-polygon with the boundary counting as inside.

    The polygon closes implicitly (last vertex connects to the first).
    """
    pts = np.asarray(points_px, dtype=np.float64)
    poly = np.asarray(polygon, dtype=np.float64)
    x = pts[:, 0]
    y = pts[:, 1]
    inside = np.zeros(len(pts), dtype=bool)
    on_edge = np.zeros(len(pts), dtype=bool)
    m = len(poly)
    for i in range(m):
        x1, y1 = poly[i]
        x2, y2 = poly[(i + 1) % m]
        straddles = (y1 > y) != (y2 > y)
        if y2 != y1:
            with np.errstate(invalid="ignore"):
                x_cross = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
            inside ^= straddles & (x < x_cross)
        cross = (x2 - x1) * (y - y1) - (y2 - y1) * (x - x1)
        within = (
            (x >= min(x1, x2)) & (x <= max(x1, x2))
            & (y >= min(y1, y2)) & (y <= max(y1, y2))
        )
        on_edge |= (cross == 0.0) & within
    return inside | on_edge


def _selection_mask(
    cloud: PointCloud, viewport: Viewport, viewpoint: Viewpoint, polygon: np.ndarray
) -> np.ndarray:
    positions, depth = project_points(cloud.points, viewpoint, viewport)
    selected = np.zeros(len(cloud), dtype=bool)
    in_front = depth > 0.0
    selected[in_front] = polygon_mask(positions[in_front], polygon)
    return selected


def _validate_polygon(polygon) -> np.ndarray:
    poly = np.asarray(polygon, dtype=np.float64)
    if poly.ndim != 2 or poly.shape[1] != 2 or not np.all(np.isfinite(poly)):
        raise ValueError("polygon must be a finite (m, 2) vertex list")
    if len(np.unique(poly, axis=0)) < 3:
        raise ValueError("polygon needs at least 3 distinct vertices")
    return poly


def view_direction(alpha: float, beta: float) -> np.ndarray:
    """Unit vector from target toward the camera for given angles."""
    return np.array(
        [
            math.sin(beta) * math.cos(alpha),
            math.sin(beta) * math.sin(alpha),
            math.cos(beta),
        ]
    )


def viewpoint_matches(
    viewpoint: Viewpoint, reference: Viewpoint, angle_tol: float
) -> bool:
    """Whether a camera pose counts as being at a reference viewpoint.

    The pose must look from the same direction within ``angle_tol``, target
    essentially the same point, and sit at a comparable distance.  The
    angular tolerance is the deciding criterion; target and distance checks
    only reject cameras parked somewhere else entirely.
    """
    da = view_direction(viewpoint.alpha, viewpoint.beta)
    db = view_direction(reference.alpha, reference.beta)
    angle = math.acos(max(-1.0, min(1.0, float(np.dot(da, db)))))
    if angle > angle_tol + 1e-12:
        return False
    target_shift = float(
        np.linalg.norm(np.asarray(viewpoint.target) - np.asarray(reference.target))
    )
    if target_shift > 0.05 * reference.distance:
        return False
    ratio = viewpoint.distance / reference.distance
    return 0.5 <= ratio <= 2.0


def apply_lasso(
    session: LabelSession,
    viewpoint: Viewpoint,
    polygon,
    category: int,
    mode: str,
) -> int:
    """Apply one lasso edit and append it to the log.

    Returns how many points changed label.  Selection is strict: a point
    must project inside or on the polygon and sit in front of the camera.
    """
    poly = _validate_polygon(polygon)
    if mode not in (MODE_LABEL, MODE_ERASE):
        raise ValueError(f"mode must be '{MODE_LABEL}' or '{MODE_ERASE}'")
    category = int(category)
    if category not in session.categories:
        raise ValueError(f"unknown category {category}")
    selected = _selection_mask(session.cloud, session.viewport, viewpoint, poly)
    if mode == MODE_LABEL:
        changed_mask = selected & (session.labels != category)
        session.labels[changed_mask] = category
    else:
        changed_mask = selected & (session.labels == category)
        session.labels[changed_mask] = session.unlabeled_category
    changed = int(np.count_nonzero(changed_mask))
    session.edits.append(
        LassoEdit(
            seq=len(session.edits),
            timestamp=time.time(),
            target=viewpoint.target,
            alpha=viewpoint.alpha,
            beta=viewpoint.beta,
            distance=viewpoint.distance,
            polygon=tuple((float(u), float(v)) for u, v in poly),
            category=category,
            mode=mode,
            changed=changed,
        )
    )
    angle_tol = max(session.grid.alpha_stride, session.grid.beta_stride)
    for rec in session.recommendations:
        if rec.checked:
            continue
        if viewpoint_matches(viewpoint, rec.viewpoint, angle_tol):
            rec.checked = True
            session.checked.add(recommendation_id(rec))
    return changed


def mark_checked(session: LabelSession, rec_id: str) -> None:
    for rec in session.recommendations:
        if recommendation_id(rec) == rec_id:
            rec.checked = True
            session.checked.add(rec_id)
            return
    raise ValueError(f"unknown recommendation id {rec_id!r}")


def replay_labels(session: LabelSession) -> np.ndarray:
    """Recompute working labels from the initial labels and the edit log."""
    labels = session.initial_labels.copy()
    for edit in session.edits:
        viewpoint = Viewpoint(
            target=edit.target, alpha=edit.alpha, beta=edit.beta, distance=edit.distance
        )
        selected = _selection_mask(
            session.cloud, session.viewport, viewpoint, np.asarray(edit.polygon)
        )
        if edit.mode == MODE_LABEL:
            labels[selected & (labels != edit.category)] = edit.category
        else:
            labels[selected & (labels == edit.category)] = session.unlabeled_category
    return labels


def overview_viewpoint(cloud: PointCloud) -> Viewpoint:
    """Top-down pose framing the whole cloud: bounding-cuboid center target
    at 1.5 x the cloud's bounding diagonal."""
    lo = cloud.points.min(axis=0)
    hi = cloud.points.max(axis=0)
    center = (lo + hi) / 2.0
    diagonal = bounding_diagonal(cloud.points)
    distance = 1.5 * diagonal if diagonal > 0.0 else 1.0
    return Viewpoint(target=tuple(center), alpha=0.0, beta=0.0, distance=distance)


def session_metrics(session: LabelSession) -> dict:
    """mIoU of working and initial labels against ground truth, if present."""
    from .datasets import miou

    if session.truth_labels is None:
        return {"available": False}
    current, per_category = miou(session.labels, session.truth_labels)
    initial, _ = miou(session.initial_labels, session.truth_labels)
    return {
        "available": True,
        "miou": current,
        "initial_miou": initial,
        "delta_miou": current - initial,
        "per_category": {str(k): v for k, v in per_category.items()},
    }


def _labels_to_b64(labels: np.ndarray) -> str:
    return base64.b64encode(labels.astype("<u4").tobytes()).decode("ascii")


def _labels_from_b64(text: str, expected: int | None = None) -> np.ndarray:
    raw = base64.b64decode(text.encode("ascii"))
    if len(raw) % 4 != 0:
        raise IntegrityError("packed labels not a multiple of 4 bytes")
    labels = np.frombuffer(raw, dtype="<u4").astype(np.uint32)
    if expected is not None and len(labels) != expected:
        raise IntegrityError(f"expected {expected} labels, found {len(labels)}")
    return labels


def _estimate_to_json(estimate: LassoCostEstimate) -> dict:
    if estimate.feasible:
        return {
            "difficulty": estimate.difficulty,
            "components": list(estimate.components),
        }
    return {
        "difficulty": "infeasible",
        "reason": estimate.reason.value,
        "interior_negatives": estimate.interior_negatives,
    }


def _estimate_from_json(doc: dict) -> LassoCostEstimate:
    if doc["difficulty"] == "infeasible":
        return LassoCostEstimate(
            difficulty=math.inf,
            reason=InfeasibleReason(doc["reason"]),
            interior_negatives=int(doc.get("interior_negatives", 0)),
        )
    return LassoCostEstimate(
        difficulty=float(doc["difficulty"]),
        components=tuple(float(c) for c in doc.get("components", [])),
    )


def recommendation_to_json(rec: ViewpointRecommendation) -> dict:
    return {
        "id": recommendation_id(rec),
        "category": rec.category,
        "instance_id": rec.instance_id,
        "target": list(rec.viewpoint.target),
        "alpha": rec.viewpoint.alpha,
        "beta": rec.viewpoint.beta,
        "distance": rec.viewpoint.distance,
        "estimate": _estimate_to_json(rec.estimate),
        "rank": rec.rank,
        "checked": rec.checked,
    }


def _recommendation_from_json(doc: dict) -> ViewpointRecommendation:
    return ViewpointRecommendation(
        category=int(doc["category"]),
        instance_id=int(doc["instance_id"]),
        viewpoint=Viewpoint(
            target=tuple(doc["target"]),
            alpha=float(doc["alpha"]),
            beta=float(doc["beta"]),
            distance=float(doc["distance"]),
        ),
        estimate=_estimate_from_json(doc["estimate"]),
        rank=int(doc["rank"]),
        checked=bool(doc["checked"]),
    )


def _session_payload(session: LabelSession) -> dict:
    return {
        "version": 1,
        "session_id": session.session_id,
        "dataset_name": session.dataset_name,
        "manifest_path": session.manifest_path,
        "categories": {str(k): v for k, v in sorted(session.categories.items())},
        "viewport": {
            "width_px": session.viewport.width_px,
            "height_px": session.viewport.height_px,
            "vertical_fov_rad": session.viewport.vertical_fov_rad,
            "dot_radius_px": session.viewport.dot_radius_px,
        },
        "grid": {
            "alpha_stride": session.grid.alpha_stride,
            "beta_stride": session.grid.beta_stride,
        },
        "gap_weight": session.gap_weight,
        "unlabeled_category": session.unlabeled_category,
        "initial_labels": _labels_to_b64(session.initial_labels),
        "labels": _labels_to_b64(session.labels),
        "edits": [
            {
                "seq": edit.seq,
                "timestamp": edit.timestamp,
                "target": list(edit.target),
                "alpha": edit.alpha,
                "beta": edit.beta,
                "distance": edit.distance,
                "polygon": [list(v) for v in edit.polygon],
                "category": edit.category,
                "mode": edit.mode,
                "changed": edit.changed,
            }
            for edit in session.edits
        ],
        "checked": sorted(session.checked),
        "recommendations": [
            recommendation_to_json(rec) for rec in session.recommendations
        ],
    }


def _payload_checksum(payload: dict) -> str:
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class SessionStore:
    root: Path

    def path_for(self, session_id: str) -> Path:
        return Path(self.root) / f"{session_id}.json"


def save_session(store: SessionStore, session: LabelSession) -> Path:
    """Atomically persist a session: temp file in place, then rename."""
    payload = _session_payload(session)
    document = {"checksum": _payload_checksum(payload), "payload": payload}
    path = store.path_for(session.session_id)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp_path = path.with_name(path.name + ".tmp")
    tmp_path.write_text(json.dumps(document, sort_keys=True, indent=1))
    os.replace(tmp_path, path)
    return path


def load_session(
    store: SessionStore,
    session_id: str,
    cloud: PointCloud | None = None,
    truth_labels: np.ndarray | None = None,
) -> LabelSession:
    """Restore a persisted session.

    The point cloud and ground truth are dataset state, not session state;
    pass them in, or leave the cloud None to reload both via the stored
    manifest path.
    """
    path = store.path_for(session_id)
    try:
        document = json.loads(path.read_text())
    except OSError as exc:
        raise IntegrityError(f"cannot read session file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise IntegrityError(f"corrupt session file {path}: {exc}") from exc
    if set(document.keys()) != {"checksum", "payload"}:
        raise IntegrityError(f"unexpected session document structure in {path}")
    payload = document["payload"]
    if _payload_checksum(payload) != document["checksum"]:
        raise IntegrityError(f"checksum mismatch in {path}")

    if cloud is None:
        from .datasets import DatasetManifest, load_cloud, load_labels

        manifest_path = payload.get("manifest_path")
        if manifest_path is None:
            raise IntegrityError("session has no manifest path and no cloud given")
        manifest = DatasetManifest.from_file(manifest_path)
        cloud = load_cloud(manifest)
        if truth_labels is None and manifest.ground_truth_label_path is not None:
            truth_labels = load_labels(manifest.ground_truth_label_path, len(cloud))

    viewport_doc = payload["viewport"]
    session = LabelSession(
        session_id=payload["session_id"],
        dataset_name=payload["dataset_name"],
        cloud=cloud,
        categories={int(k): v for k, v in payload["categories"].items()},
        viewport=Viewport(
            width_px=int(viewport_doc["width_px"]),
            height_px=int(viewport_doc["height_px"]),
            vertical_fov_rad=float(viewport_doc["vertical_fov_rad"]),
            dot_radius_px=float(viewport_doc["dot_radius_px"]),
        ),
        grid=GridSpec(
            alpha_stride=float(payload["grid"]["alpha_stride"]),
            beta_stride=float(payload["grid"]["beta_stride"]),
        ),
        initial_labels=_labels_from_b64(payload["initial_labels"], len(cloud)),
        labels=_labels_from_b64(payload["labels"], len(cloud)),
        recommendations=[
            _recommendation_from_json(doc) for doc in payload["recommendations"]
        ],
        edits=[
            LassoEdit(
                seq=int(doc["seq"]),
                timestamp=float(doc["timestamp"]),
                target=tuple(doc["target"]),
                alpha=float(doc["alpha"]),
                beta=float(doc["beta"]),
                distance=float(doc["distance"]),
                polygon=tuple((float(u), float(v)) for u, v in doc["polygon"]),
                category=int(doc["category"]),
                mode=str(doc["mode"]),
                changed=int(doc["changed"]),
            )
            for doc in payload["edits"]
        ],
        checked=set(payload["checked"]),
        truth_labels=truth_labels,
        manifest_path=payload.get("manifest_path"),
        gap_weight=float(payload["gap_weight"]),
        unlabeled_category=int(payload["unlabeled_category"]),
    )
    session.labels = session.labels.copy()
    session.initial_labels = session.initial_labels.copy()
    return session
