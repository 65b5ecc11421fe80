"""Instance extraction from semantically labeled clouds.

Scanning LiDAR spaces points roughly linearly in range: the farther a
surface, the sparser its samples.  A fixed-radius DBSCAN therefore either
shreds distant objects or merges nearby ones.  Here every point brings its
own neighborhood radius proportional to its distance from the sensor and
the sensor's angular resolution, estimated from the data when unknown.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .geometry import PointCloud

DEFAULT_MIN_PTS = 10
DEFAULT_EPS_FACTOR = 100.0

NOISE = -1
_UNSEEN = -2


@dataclass(frozen=True)
class AngularResolution:
    """Estimated sensor angular resolution in radians.

    ``per_point_theta`` optionally keeps the per-point estimates that the
    median was taken over, for diagnostics.
    """

    theta: float
    per_point_theta: np.ndarray | None = None

    def __post_init__(self) -> None:
        if not np.isfinite(self.theta) or self.theta <= 0.0:
            raise ValueError(f"theta must be positive and finite, got {self.theta!r}")


@dataclass(frozen=True)
class Instance:
    """One semantic instance: a category and the rows that belong to it."""

    category: int
    instance_id: int
    indices: np.ndarray

    def __post_init__(self) -> None:
        if len(self.indices) == 0:
            raise ValueError("instances cannot be empty")


@dataclass
class InstanceSet:
    instances: list[Instance] = field(default_factory=list)
    noise: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))


def estimate_angular_resolution(
    cloud: PointCloud | np.ndarray, keep_per_point: bool = False
) -> AngularResolution:
    """Estimate angular resolution as the median of per-point estimates.

    For each point p away from the origin, the angle subtended at the sensor
    by p and its nearest neighbor q is approximately d_pq / d_op.  The lower
    median over all such points is robust to both duplicate points and
    isolated outliers.  Points exactly at the origin are skipped.
    """
    points = cloud.points if isinstance(cloud, PointCloud) else np.asarray(cloud, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] != 3:
        raise ValueError("points must have shape (n, 3)")
    range_from_origin = np.linalg.norm(points, axis=1)
    usable = range_from_origin > 0.0
    if np.count_nonzero(usable) < 2 or len(points) < 2:
        raise ValueError("need at least 2 points away from the origin")
    tree = cKDTree(points)
    # k=2: the nearest hit is the query point itself at distance 0.
    dist, _ = tree.query(points[usable], k=2)
    nearest = dist[:, 1]
    theta_p = nearest / range_from_origin[usable]
    order = np.sort(theta_p)
    theta = float(order[(len(order) - 1) // 2])
    if theta <= 0.0 or not np.isfinite(theta):
        raise ValueError("angular resolution collapsed to zero; degenerate cloud")
    return AngularResolution(
        theta=theta, per_point_theta=theta_p if keep_per_point else None
    )


def _neighborhoods(points: np.ndarray, radii: np.ndarray) -> list[np.ndarray]:
    tree = cKDTree(points)
    lists = tree.query_ball_point(points, radii)
    return [np.sort(np.asarray(nb, dtype=np.int64)) for nb in lists]


def adaptive_dbscan(
    points: np.ndarray,
    theta: float,
    min_pts: int = DEFAULT_MIN_PTS,
    eps_factor: float = DEFAULT_EPS_FACTOR,
) -> np.ndarray:
    """DBSCAN with a per-point neighborhood radius of eps_factor * d_op * theta.

    The query point's own radius defines its neighborhood, so the neighbor
    relation is asymmetric between points at different ranges.  A point is a
    core point when its neighborhood, itself included, reaches ``min_pts``.
    Expansion order is deterministic: seeds and neighbor lists in ascending
    index order.  Returns cluster ids starting at 0, with noise marked -1.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] != 3:
        raise ValueError("points must have shape (n, 3)")
    if not np.isfinite(theta) or theta <= 0.0:
        raise ValueError("theta must be positive")
    if min_pts < 1:
        raise ValueError("min_pts must be at least 1")
    if not np.isfinite(eps_factor) or eps_factor <= 0.0:
        raise ValueError("eps factor must be positive")

    n = len(points)
    labels = np.full(n, _UNSEEN, dtype=np.int64)
    if n == 0:
        return labels
    radii = eps_factor * theta * np.linalg.norm(points, axis=1)
    neighborhoods = _neighborhoods(points, radii)
    core = np.array([len(nb) >= min_pts for nb in neighborhoods])

    cluster = 0
    for seed in range(n):
        if labels[seed] != _UNSEEN:
            continue
        if not core[seed]:
            labels[seed] = NOISE
            continue
        labels[seed] = cluster
        frontier = list(neighborhoods[seed])
        i = 0
        while i < len(frontier):
            q = frontier[i]
            i += 1
            if labels[q] == NOISE:
                labels[q] = cluster  # border point adopted by the cluster
            if labels[q] != _UNSEEN:
                continue
            labels[q] = cluster
            if core[q]:
                frontier.extend(neighborhoods[q])
        cluster += 1
    return labels


def split_instances(
    cloud: PointCloud,
    theta: float,
    min_pts: int = DEFAULT_MIN_PTS,
    background_categories: set[int] | frozenset[int] = frozenset(),
    eps_factor: float = DEFAULT_EPS_FACTOR,
) -> InstanceSet:
    """Group a semantically labeled cloud into per-category instances.

    Background categories (large connected stuff like ground) skip
    clustering and become a single instance each.  Everything else is
    clustered per category; DBSCAN noise points join the shared noise list.
    Instance ids count from 1 within each category.
    """
    if cloud.semantic_labels is None:
        raise ValueError("cloud has no semantic labels")
    labels = cloud.semantic_labels
    result = InstanceSet()
    noise_parts: list[np.ndarray] = []
    for category in sorted(int(c) for c in np.unique(labels)):
        member_idx = np.flatnonzero(labels == category)
        if category in background_categories:
            result.instances.append(
                Instance(category=category, instance_id=1, indices=member_idx)
            )
            continue
        cluster_ids = adaptive_dbscan(
            cloud.points[member_idx], theta, min_pts=min_pts, eps_factor=eps_factor
        )
        noise_parts.append(member_idx[cluster_ids == NOISE])
        for cid in range(int(cluster_ids.max()) + 1 if len(cluster_ids) else 0):
            result.instances.append(
                Instance(
                    category=category,
                    instance_id=cid + 1,
                    indices=member_idx[cluster_ids == cid],
                )
            )
    if noise_parts:
        result.noise = np.sort(np.concatenate(noise_parts))
    return result


def instances_from_labels(cloud: PointCloud) -> InstanceSet:
    """Build an InstanceSet from precomputed per-point instance labels.

    Rows with instance label 0 count as unassigned noise; ids are preserved.
    """
    if cloud.semantic_labels is None or cloud.instance_labels is None:
        raise ValueError("cloud needs semantic and instance labels")
    result = InstanceSet()
    pairs = np.stack(
        [cloud.semantic_labels.astype(np.int64), cloud.instance_labels.astype(np.int64)],
        axis=1,
    )
    noise_mask = pairs[:, 1] == 0
    result.noise = np.flatnonzero(noise_mask)
    assigned = np.flatnonzero(~noise_mask)
    if len(assigned) == 0:
        return result
    unique_pairs = np.unique(pairs[assigned], axis=0)
    for category, instance_id in unique_pairs:
        mask = (pairs[:, 0] == category) & (pairs[:, 1] == instance_id)
        result.instances.append(
            Instance(
                category=int(category),
                instance_id=int(instance_id),
                indices=np.flatnonzero(mask),
            )
        )
    return result
