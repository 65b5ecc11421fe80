"""Viewpoint search: find the camera rotation from which an instance is
cheapest to lasso.

Candidates live on a fixed angular grid over the arc-rotate sphere.  Each
one is scored with the dotted-tunnel difficulty of the instance projected
from there, and the minimizer wins, with deterministic tie-breaking.  The
camera target and distance are fixed per instance (gravity center, bounding
diagonal heuristic), so the search runs over rotations only.

The scoring shortcut: difficulty depends on the positives only through the
2D convex hull of their projections, and with every positive in front of
the camera that hull is spanned by projections of the instance's 3D convex
hull vertices.  Searches therefore project only those vertices plus all
distractors, which keeps results identical to scoring the full scene.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from .clustering import Instance, InstanceSet
from .geometry import TAU, PointCloud, Viewpoint, Viewport, project_points
from .lasso_cost import LassoCostEstimate, estimate_from_projections

DEFAULT_STRIDE = math.pi / 12.0
DEFAULT_SIZE_CUTOFF = 0.2
DEFAULT_MIN_CAMERA_DISTANCE = 1.0


@dataclass(frozen=True)
class GridSpec:
    """Angular search grid: longitudes over (-pi, pi], latitudes over [0, pi].

    Strides must divide their domains evenly.  Defaults give 24 longitudes
    and 13 latitudes, 312 candidates.
    """

    alpha_stride: float = DEFAULT_STRIDE
    beta_stride: float = DEFAULT_STRIDE

    def __post_init__(self) -> None:
        for stride, domain, name in (
            (self.alpha_stride, TAU, "alpha"),
            (self.beta_stride, math.pi, "beta"),
        ):
            if not math.isfinite(stride) or stride <= 0.0:
                raise ValueError(f"{name} stride must be positive")
            steps = domain / stride
            if abs(steps - round(steps)) > 1e-9 or round(steps) < 1:
                raise ValueError(f"{name} stride must divide its domain evenly")

    def alphas(self) -> np.ndarray:
        n = round(TAU / self.alpha_stride)
        return -math.pi + (np.arange(1, n + 1) / n) * TAU

    def betas(self) -> np.ndarray:
        n = round(math.pi / self.beta_stride)
        return (np.arange(0, n + 1) / n) * math.pi

    def candidates(self) -> list[tuple[float, float]]:
        """All (alpha, beta) pairs in lexicographic (beta, alpha) order."""
        return [
            (float(a), float(b)) for b in self.betas() for a in self.alphas()
        ]


@dataclass
class ViewpointRecommendation:
    category: int
    instance_id: int
    viewpoint: Viewpoint
    estimate: LassoCostEstimate
    rank: int = 0
    checked: bool = False


def gravity_center(points: np.ndarray) -> np.ndarray:
    """Unweighted mean position of an instance's points."""
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or len(points) == 0:
        raise ValueError("gravity center needs a non-empty (n, 3) array")
    return points.mean(axis=0)


def bounding_diagonal(points: np.ndarray) -> float:
    """Diagonal length of the axis-aligned bounding cuboid."""
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or len(points) == 0:
        raise ValueError("bounding diagonal needs a non-empty (n, 3) array")
    extent = points.max(axis=0) - points.min(axis=0)
    return float(np.linalg.norm(extent))


def camera_distance(
    points: np.ndarray, min_distance: float = DEFAULT_MIN_CAMERA_DISTANCE
) -> float:
    """Camera distance heuristic: 1.5 x bounding diagonal.

    A degenerate instance (single point, exactly coincident points) has a
    zero diagonal; the configured minimum keeps the camera off the target.
    """
    diagonal = bounding_diagonal(points)
    if diagonal <= 0.0:
        return min_distance
    return 1.5 * diagonal


def _silhouette_support(points: np.ndarray) -> np.ndarray:
    """Points that can span the projected silhouette: 3D hull vertices.

    Flat or tiny instances make the hull construction fail; every point is
    a potential silhouette point then.
    """
    if len(points) < 4:
        return points
    try:
        hull = ConvexHull(points)
    except QhullError:
        return points
    return points[np.sort(hull.vertices)]


def _score_candidates(
    candidates: list[tuple[float, float]],
    support: np.ndarray,
    negatives: np.ndarray,
    target: tuple[float, float, float],
    distance: float,
    viewport: Viewport,
    gap_weight: float,
) -> list[LassoCostEstimate]:
    estimates = []
    for alpha, beta in candidates:
        vp = Viewpoint(target=target, alpha=alpha, beta=beta, distance=distance)
        pos_px, pos_depth = project_points(support, vp, viewport)
        if np.any(pos_depth <= 0.0):
            estimates.append(
                estimate_from_projections(
                    pos_px, negatives[:0], viewport.dot_radius_px,
                    gap_weight, positives_behind=True,
                )
            )
            continue
        neg_px, neg_depth = project_points(negatives, vp, viewport)
        neg_px = neg_px[neg_depth > 0.0]
        estimates.append(
            estimate_from_projections(
                pos_px, neg_px, viewport.dot_radius_px, gap_weight
            )
        )
    return estimates


_WORKER_STATE: dict = {}


def _worker_init(support, negatives, target, distance, viewport, gap_weight) -> None:
    _WORKER_STATE["args"] = (support, negatives, target, distance, viewport, gap_weight)


def _worker_score(chunk: list[tuple[float, float]]) -> list[LassoCostEstimate]:
    support, negatives, target, distance, viewport, gap_weight = _WORKER_STATE["args"]
    return _score_candidates(
        chunk, support, negatives, target, distance, viewport, gap_weight
    )


def evaluate_grid(
    cloud: PointCloud,
    instance_indices: np.ndarray,
    grid: GridSpec,
    viewport: Viewport,
    gap_weight: float = 1.0,
    min_distance: float = DEFAULT_MIN_CAMERA_DISTANCE,
    workers: int | None = None,
) -> list[tuple[float, float, LassoCostEstimate]]:
    """Score every grid candidate for one instance.

    Returns (alpha, beta, estimate) triples in canonical candidate order.
    ``workers`` > 1 splits candidates over processes; the result is
    identical to the serial evaluation.
    """
    indices = np.asarray(instance_indices, dtype=np.int64)
    if len(indices) == 0:
        raise ValueError("instance has no points")
    member = np.zeros(len(cloud), dtype=bool)
    member[indices] = True
    instance_points = cloud.points[member]
    negatives = cloud.points[~member]
    target = tuple(gravity_center(instance_points))
    distance = camera_distance(instance_points, min_distance)
    support = _silhouette_support(instance_points)
    candidates = grid.candidates()

    if workers is not None and workers > 1:
        chunks = [list(c) for c in np.array_split(np.array(candidates), workers)]
        chunks = [[(float(a), float(b)) for a, b in c] for c in chunks if len(c)]
        with ProcessPoolExecutor(
            max_workers=len(chunks),
            initializer=_worker_init,
            initargs=(support, negatives, target, distance, viewport, gap_weight),
        ) as pool:
            parts = list(pool.map(_worker_score, chunks))
        estimates = [e for part in parts for e in part]
    else:
        estimates = _score_candidates(
            candidates, support, negatives, target, distance, viewport, gap_weight
        )
    return [
        (alpha, beta, est) for (alpha, beta), est in zip(candidates, estimates)
    ]


def grid_search_viewpoint(
    cloud: PointCloud,
    instance: Instance | np.ndarray,
    grid: GridSpec,
    viewport: Viewport,
    gap_weight: float = 1.0,
    min_distance: float = DEFAULT_MIN_CAMERA_DISTANCE,
    workers: int | None = None,
) -> tuple[Viewpoint, LassoCostEstimate]:
    """Best viewpoint for one instance over the grid.

    The minimizer of the difficulty estimate wins; ties break toward the
    lexicographically smallest (beta, alpha).  When every candidate is
    infeasible the one whose silhouette traps the fewest distractors wins,
    still flagged infeasible.
    """
    indices = instance.indices if isinstance(instance, Instance) else instance
    scored = evaluate_grid(
        cloud, indices, grid, viewport, gap_weight, min_distance, workers
    )
    best = None
    for alpha, beta, estimate in scored:
        key = estimate.sort_key()
        if best is None or key < best[0]:
            best = (key, alpha, beta, estimate)
    _, alpha, beta, estimate = best
    member_points = cloud.points[np.asarray(indices, dtype=np.int64)]
    viewpoint = Viewpoint(
        target=tuple(gravity_center(member_points)),
        alpha=alpha,
        beta=beta,
        distance=camera_distance(member_points, min_distance),
    )
    return viewpoint, estimate


def recommend_all(
    cloud: PointCloud,
    instances: InstanceSet,
    grid: GridSpec | None = None,
    viewport: Viewport | None = None,
    gap_weight: float = 1.0,
    size_cutoff: float = DEFAULT_SIZE_CUTOFF,
    excluded_categories: set[int] | frozenset[int] = frozenset(),
    min_distance: float = DEFAULT_MIN_CAMERA_DISTANCE,
    workers: int | None = None,
) -> list[ViewpointRecommendation]:
    """Ranked viewpoint recommendations for every eligible instance.

    Instances of excluded categories are skipped, as are instances holding
    more than ``size_cutoff`` of the cloud's points (the difficulty model
    serves compact objects, not scene-scale ones).  Output is sorted by
    ascending difficulty with infeasible instances last, ranks 1-based.
    """
    grid = grid or GridSpec()
    viewport = viewport or Viewport()
    recommendations = []
    for instance in instances.instances:
        if instance.category in excluded_categories:
            continue
        if len(instance.indices) / len(cloud) > size_cutoff:
            continue
        viewpoint, estimate = grid_search_viewpoint(
            cloud, instance, grid, viewport, gap_weight, min_distance, workers
        )
        recommendations.append(
            ViewpointRecommendation(
                category=instance.category,
                instance_id=instance.instance_id,
                viewpoint=viewpoint,
                estimate=estimate,
            )
        )
    recommendations.sort(key=lambda rec: rec.estimate.sort_key())
    return [
        replace(rec, rank=i + 1) for i, rec in enumerate(recommendations)
    ]


def pca_third_component(points: np.ndarray) -> np.ndarray:
    """Unit direction of least point variance, the classic viewing baseline.

    Sign is fixed so the first nonzero component is positive, which also
    resolves eigenvector ambiguity for degenerate spectra.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] != 3 or len(points) < 3:
        raise ValueError("need at least 3 points with 3 coordinates")
    centered = points - points.mean(axis=0)
    covariance = centered.T @ centered / (len(points) - 1)
    _, vectors = np.linalg.eigh(covariance)
    direction = vectors[:, 0]
    nonzero = np.flatnonzero(direction)
    if len(nonzero) and direction[nonzero[0]] < 0.0:
        direction = -direction
    return direction
