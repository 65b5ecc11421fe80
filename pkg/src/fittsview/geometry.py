"""Point cloud containers, the arc-rotate camera, and perspective projection.

Conventions used throughout the package:

* World coordinates are right-handed with the z axis pointing up.
* A camera pose is an arc-rotate viewpoint around a target point: longitude
  ``alpha`` in (-pi, pi], latitude ``beta`` in [0, pi] measured from the +z
  axis (``beta = 0`` looks straight down), and a positive distance.
* The camera position is ``target + distance * (sin b cos a, sin b sin a, cos b)``
  and the camera always looks at the target.
* Screen-up is the world z axis projected onto the image plane.  At the two
  poles (``beta`` exactly 0 or pi) that projection vanishes and the world x
  axis is used instead.
* Pixel coordinates have their origin at the top-left corner of the viewport,
  u growing right and v growing down.  The vertical field of view is fixed by
  the viewport; projection is an ideal pinhole with square pixels.
* Points at or behind the camera plane have no pixel position.  They are
  reported with NaN coordinates and a ``behind_camera`` flag.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

TAU = 2.0 * math.pi


def normalize_alpha(alpha: float) -> float:
    """Wrap a longitude angle into the canonical interval (-pi, pi]."""
    if not math.isfinite(alpha):
        raise ValueError(f"longitude must be finite, got {alpha!r}")
    wrapped = math.remainder(alpha, TAU)
    if wrapped <= -math.pi:
        wrapped = math.pi
    return wrapped


@dataclass(frozen=True)
class Viewpoint:
    """An arc-rotate camera pose around ``target``.

    ``alpha`` is normalized into (-pi, pi] on construction.  ``beta`` outside
    [0, pi] and non-positive distances are rejected rather than clamped so a
    bad pose never silently moves the camera.
    """

    target: tuple[float, float, float]
    alpha: float
    beta: float
    distance: float

    def __post_init__(self) -> None:
        target = tuple(float(c) for c in self.target)
        if len(target) != 3 or not all(math.isfinite(c) for c in target):
            raise ValueError(f"target must be a finite 3D point, got {self.target!r}")
        alpha = normalize_alpha(float(self.alpha))
        beta = float(self.beta)
        if not math.isfinite(beta) or not 0.0 <= beta <= math.pi:
            raise ValueError(f"latitude must lie in [0, pi], got {self.beta!r}")
        distance = float(self.distance)
        if not math.isfinite(distance) or distance <= 0.0:
            raise ValueError(f"distance must be positive, got {self.distance!r}")
        object.__setattr__(self, "target", target)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "distance", distance)


@dataclass(frozen=True)
class Viewport:
    """Output raster: size in pixels, vertical field of view, and dot radius.

    Dots are the screen footprint of rendered points.  A dot radius that is
    not well below the viewport size breaks every clearance computation
    downstream, so radii of a quarter of the smaller side or more are
    rejected.
    """

    width_px: int = 1920
    height_px: int = 1080
    vertical_fov_rad: float = math.pi / 4.0
    dot_radius_px: float = 2.0

    def __post_init__(self) -> None:
        if self.width_px <= 0 or self.height_px <= 0:
            raise ValueError("viewport size must be positive")
        if not 0.0 < self.vertical_fov_rad < math.pi:
            raise ValueError("vertical field of view must lie in (0, pi)")
        limit = min(self.width_px, self.height_px) / 4.0
        if not 0.0 < self.dot_radius_px < limit:
            raise ValueError(
                f"dot radius must lie in (0, {limit}), got {self.dot_radius_px!r}"
            )

    @property
    def focal_px(self) -> float:
        """Focal length in pixels implied by the vertical field of view."""
        return (self.height_px / 2.0) / math.tan(self.vertical_fov_rad / 2.0)


@dataclass
class PointCloud:
    """Points with optional per-point semantic and instance labels.

    ``points`` is an (n, 3) float64 array.  Label arrays, when present, are
    uint32 and aligned with the points row for row.
    """

    points: np.ndarray
    semantic_labels: np.ndarray | None = None
    instance_labels: np.ndarray | None = None

    def __post_init__(self) -> None:
        points = np.asarray(self.points, dtype=np.float64)
        if points.ndim != 2 or points.shape[1] != 3:
            raise ValueError(f"points must have shape (n, 3), got {points.shape}")
        if not np.all(np.isfinite(points)):
            raise ValueError("points must be finite")
        self.points = points
        for name in ("semantic_labels", "instance_labels"):
            labels = getattr(self, name)
            if labels is None:
                continue
            labels = np.asarray(labels)
            if labels.shape != (len(points),):
                raise ValueError(
                    f"{name} must have shape ({len(points)},), got {labels.shape}"
                )
            if not np.issubdtype(labels.dtype, np.integer):
                raise ValueError(f"{name} must be integer typed")
            if np.any(labels.astype(np.int64) < 0):
                raise ValueError(f"{name} must be non-negative")
            setattr(self, name, labels.astype(np.uint32))

    def __len__(self) -> int:
        return len(self.points)


@dataclass
class ProjectedScene:
    """A point cloud rendered through one viewpoint.

    ``positions_px`` holds (u, v) pixel centers, NaN where the point sits at
    or behind the camera plane.  ``positive`` marks the points that belong to
    the instance under consideration; everything else is a distractor.
    """

    positions_px: np.ndarray
    positive: np.ndarray
    behind_camera: np.ndarray
    dot_radius_px: float

    def __post_init__(self) -> None:
        if self.positions_px.ndim != 2 or self.positions_px.shape[1] != 2:
            raise ValueError("positions_px must have shape (n, 2)")
        n = len(self.positions_px)
        if self.positive.shape != (n,) or self.behind_camera.shape != (n,):
            raise ValueError("mask shapes must match positions")
        if self.dot_radius_px <= 0.0:
            raise ValueError("dot radius must be positive")


def camera_position(viewpoint: Viewpoint) -> np.ndarray:
    """World position of the camera for an arc-rotate viewpoint."""
    sb = math.sin(viewpoint.beta)
    offset = np.array(
        [
            sb * math.cos(viewpoint.alpha),
            sb * math.sin(viewpoint.alpha),
            math.cos(viewpoint.beta),
        ]
    )
    return np.asarray(viewpoint.target) + viewpoint.distance * offset


def view_basis(viewpoint: Viewpoint) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Orthonormal (right, up, forward) camera axes in world coordinates.

    Forward points from the camera toward the target.  Up is the world z
    axis made orthogonal to forward, except at the poles where world x is
    used, keeping the frame defined for every admissible pose.
    """
    position = camera_position(viewpoint)
    forward = np.asarray(viewpoint.target) - position
    forward = forward / np.linalg.norm(forward)
    if viewpoint.beta == 0.0 or viewpoint.beta == math.pi:
        up_hint = np.array([1.0, 0.0, 0.0])
    else:
        up_hint = np.array([0.0, 0.0, 1.0])
    up = up_hint - np.dot(up_hint, forward) * forward
    up = up / np.linalg.norm(up)
    right = np.cross(forward, up)
    return right, up, forward


def project_points(
    points: np.ndarray, viewpoint: Viewpoint, viewport: Viewport
) -> tuple[np.ndarray, np.ndarray]:
    """Project world points to pixel coordinates.

    Returns ``(positions_px, depths)`` where depths are distances along the
    view direction.  Points with non-positive depth get NaN positions.
    """
    points = np.asarray(points, dtype=np.float64)
    right, up, forward = view_basis(viewpoint)
    position = camera_position(viewpoint)
    rel = points - position
    depth = rel @ forward
    x_view = rel @ right
    y_view = rel @ up
    focal = viewport.focal_px
    with np.errstate(divide="ignore", invalid="ignore"):
        u = viewport.width_px / 2.0 + focal * x_view / depth
        v = viewport.height_px / 2.0 - focal * y_view / depth
    positions = np.stack([u, v], axis=1)
    positions[depth <= 0.0] = np.nan
    return positions, depth


def project(
    cloud: PointCloud,
    viewpoint: Viewpoint,
    viewport: Viewport,
    positive_indices,
) -> ProjectedScene:
    """Render a cloud through a viewpoint, marking one instance as positive."""
    positions, depth = project_points(cloud.points, viewpoint, viewport)
    positive = np.zeros(len(cloud), dtype=bool)
    idx = np.asarray(sorted(positive_indices), dtype=np.int64)
    if len(idx) > 0:
        if idx.min() < 0 or idx.max() >= len(cloud):
            raise ValueError("positive indices out of range")
        positive[idx] = True
    return ProjectedScene(
        positions_px=positions,
        positive=positive,
        behind_camera=depth <= 0.0,
        dot_radius_px=viewport.dot_radius_px,
    )


def viewpoint_from_position(
    target, position, *, distance: float | None = None
) -> Viewpoint:
    """Recover the arc-rotate pose that places the camera at ``position``."""
    target = np.asarray(target, dtype=np.float64)
    offset = np.asarray(position, dtype=np.float64) - target
    length = float(np.linalg.norm(offset))
    if length <= 0.0:
        raise ValueError("camera position must differ from the target")
    beta = math.acos(max(-1.0, min(1.0, offset[2] / length)))
    alpha = math.atan2(offset[1], offset[0])
    return Viewpoint(
        target=tuple(target),
        alpha=alpha,
        beta=beta,
        distance=length if distance is None else distance,
    )
