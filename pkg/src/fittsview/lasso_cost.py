"""Selection difficulty of one projected instance via a dotted-tunnel model.

A lasso stroke around a rendered instance follows a closed corridor: it must
pass around every dot on the instance silhouette (the convex hull of its
projected points) and cross the free stretches in between, while staying
clear of distractor dots that do not belong to the instance.  Hull vertices
with their clearances become the dots of a dotted tunnel, hull edges become
the gaps, and the difficulty indices of `fitts` price each part.

Scenes where no such corridor exists are infeasible rather than merely
expensive: a distractor inside the silhouette, a distractor dot overlapping
the corridor, instance points behind the camera, or no instance points at
all.  Infeasible estimates order strictly worse than any finite difficulty.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .fitts import id_curved_tunnel, id_goal_passing
from .geometry import ProjectedScene


class InfeasibleReason(enum.Enum):
    OVERLAP = "overlap"
    INTERIOR_NEGATIVE = "interior-negative"
    BEHIND_CAMERA = "behind-camera"
    DEGENERATE = "degenerate"


@dataclass(frozen=True)
class TunnelDot:
    """One silhouette vertex: pixel position and clear margin to distractors."""

    position_px: tuple[float, float]
    margin_px: float


@dataclass(frozen=True)
class TunnelGap:
    """One silhouette edge: free length and the clearance available crossing it."""

    length_px: float
    clearance_px: float


@dataclass(frozen=True)
class TunnelModel:
    """Closed loop of dots and gaps; gap e connects dot e and dot (e+1) mod n.

    Degenerate silhouettes stay loops: a single dot has no gaps, a collinear
    silhouette is a 2-gon traversed out and back.
    """

    dots: tuple[TunnelDot, ...]
    gaps: tuple[TunnelGap, ...]
    dot_radius_px: float
    gap_weight: float = 1.0

    def __post_init__(self) -> None:
        if len(self.dots) == 0:
            raise ValueError("a tunnel needs at least one dot")
        if len(self.dots) >= 2 and len(self.gaps) != len(self.dots):
            raise ValueError("dots and gaps must form a closed loop")
        if len(self.dots) == 1 and len(self.gaps) != 0:
            raise ValueError("a single dot has no gaps")
        for dot in self.dots:
            if math.isnan(dot.margin_px) or dot.margin_px <= 0.0:
                raise ValueError("dot margins must be positive")


@dataclass(frozen=True)
class TunnelFailure:
    """Why no tunnel exists, plus the distractor-inside count used as a
    ranking fallback when every candidate viewpoint fails."""

    reason: InfeasibleReason
    interior_negatives: int = 0


@dataclass(frozen=True)
class LassoCostEstimate:
    """Difficulty of lassoing one projected instance.

    ``difficulty`` is a finite index or ``math.inf`` for infeasible scenes,
    in which case ``reason`` explains why.  Finite difficulty is exactly the
    sum of ``components`` (one term per dot, then one per gap).
    """

    difficulty: float
    components: tuple[float, ...] = ()
    reason: InfeasibleReason | None = None
    interior_negatives: int = 0

    def __post_init__(self) -> None:
        if math.isinf(self.difficulty) and self.reason is None:
            raise ValueError("infeasible estimates need a reason")
        if math.isfinite(self.difficulty) and self.reason is not None:
            raise ValueError("finite estimates cannot carry a reason")

    @property
    def feasible(self) -> bool:
        return math.isfinite(self.difficulty)

    def sort_key(self) -> tuple[int, float, int]:
        """Total order: finite difficulties ascending, then infeasible
        candidates by how many distractors sit inside the silhouette."""
        if self.feasible:
            return (0, self.difficulty, 0)
        return (1, 0.0, self.interior_negatives)


def convex_hull_2d(points: np.ndarray) -> np.ndarray:
    """Convex hull vertices in counterclockwise order (screen axes).

    Monotone chain with strict turns, so collinear boundary points are not
    vertices.  Degenerate inputs yield a 1-point or 2-point hull.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError("points must have shape (n, 2)")
    if len(pts) == 0:
        raise ValueError("hull of an empty set")
    unique = np.unique(pts, axis=0)  # sorts lexicographically by (x, y)
    if len(unique) == 1:
        return unique
    if len(unique) == 2:
        return unique

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower: list[np.ndarray] = []
    for p in unique:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0.0:
            lower.pop()
        lower.append(p)
    upper: list[np.ndarray] = []
    for p in unique[::-1]:
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0.0:
            upper.pop()
        upper.append(p)
    hull = lower[:-1] + upper[:-1]
    if len(hull) < 3:
        # All points collinear: keep the two extreme points as a 2-gon.
        return np.stack([lower[0], lower[-1]])
    return np.stack(hull)


def points_in_hull(hull: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Boolean mask of ``points`` lying inside or on a hull from
    convex_hull_2d.  Degenerate hulls test exact segment or point hits."""
    pts = np.asarray(points, dtype=np.float64)
    if len(pts) == 0:
        return np.zeros(0, dtype=bool)
    h = len(hull)
    if h == 1:
        return (pts[:, 0] == hull[0, 0]) & (pts[:, 1] == hull[0, 1])
    if h == 2:
        a, b = hull[0], hull[1]
        ab = b - a
        rel = pts - a
        cross = ab[0] * rel[:, 1] - ab[1] * rel[:, 0]
        dot = rel @ ab
        return (cross == 0.0) & (dot >= 0.0) & (dot <= float(ab @ ab))
    inside = np.ones(len(pts), dtype=bool)
    for i in range(h):
        a = hull[i]
        b = hull[(i + 1) % h]
        edge = b - a
        rel = pts - a
        # CCW hull: inside points keep every edge cross-product non-negative.
        inside &= edge[0] * rel[:, 1] - edge[1] * rel[:, 0] >= 0.0
    return inside


def _vertex_margins(hull: np.ndarray, negatives: np.ndarray, dot_radius: float) -> np.ndarray:
    if len(negatives) == 0:
        return np.full(len(hull), math.inf)
    d2 = (
        np.sum(hull * hull, axis=1)[:, None]
        + np.sum(negatives * negatives, axis=1)[None, :]
        - 2.0 * (hull @ negatives.T)
    )
    nearest = np.sqrt(np.maximum(d2.min(axis=1), 0.0))
    return nearest - 2.0 * dot_radius


def _count_interior(hull: np.ndarray, neg_px: np.ndarray) -> int:
    if len(neg_px) == 0:
        return 0
    # Exact prefilter: anything inside or on the hull lies in its bbox.
    lo = hull.min(axis=0)
    hi = hull.max(axis=0)
    near = neg_px[
        (neg_px[:, 0] >= lo[0])
        & (neg_px[:, 0] <= hi[0])
        & (neg_px[:, 1] >= lo[1])
        & (neg_px[:, 1] <= hi[1])
    ]
    if len(near) == 0:
        return 0
    return int(np.count_nonzero(points_in_hull(hull, near)))


def build_tunnel_from_projections(
    pos_px: np.ndarray, neg_px: np.ndarray, dot_radius: float, gap_weight: float = 1.0
) -> TunnelModel | TunnelFailure:
    """Tunnel construction on already-projected pixel positions.

    ``pos_px`` are the instance's visible pixel positions, ``neg_px`` the
    visible distractors; behind-camera handling belongs to the caller.
    """
    if len(pos_px) == 0:
        return TunnelFailure(InfeasibleReason.DEGENERATE)
    hull = convex_hull_2d(pos_px)
    interior = _count_interior(hull, neg_px)
    if interior > 0:
        return TunnelFailure(InfeasibleReason.INTERIOR_NEGATIVE, interior)

    margins = _vertex_margins(hull, neg_px, dot_radius)
    if np.any(margins <= 0.0):
        return TunnelFailure(InfeasibleReason.OVERLAP)

    dots = tuple(
        TunnelDot(position_px=(float(p[0]), float(p[1])), margin_px=float(w))
        for p, w in zip(hull, margins)
    )
    if len(hull) == 1:
        return TunnelModel(
            dots=dots, gaps=(), dot_radius_px=dot_radius, gap_weight=gap_weight
        )
    gaps = []
    n = len(hull)
    for e in range(n):
        a = hull[e]
        b = hull[(e + 1) % n]
        length = max(float(np.linalg.norm(b - a)) - 2.0 * dot_radius, 0.0)
        clearance = min(float(margins[e]), float(margins[(e + 1) % n]))
        gaps.append(TunnelGap(length_px=length, clearance_px=clearance))
    return TunnelModel(
        dots=dots, gaps=tuple(gaps), dot_radius_px=dot_radius, gap_weight=gap_weight
    )


def build_tunnel(
    scene: ProjectedScene, gap_weight: float = 1.0
) -> TunnelModel | TunnelFailure:
    """Decompose a projected scene into the dotted tunnel around its
    positives, or report why that is impossible.

    Checks run in a fixed order so the reported reason is deterministic:
    no positives, positives behind the camera, distractors inside or on the
    silhouette, then vanished margins.
    """
    positive = scene.positive
    if not positive.any():
        return TunnelFailure(InfeasibleReason.DEGENERATE)
    if scene.behind_camera[positive].any():
        return TunnelFailure(InfeasibleReason.BEHIND_CAMERA)
    visible_negative = ~positive & ~scene.behind_camera
    pos_px = scene.positions_px[positive]
    neg_px = scene.positions_px[visible_negative]
    return build_tunnel_from_projections(
        pos_px, neg_px, scene.dot_radius_px, gap_weight
    )


def tunnel_difficulty_components(model: TunnelModel) -> tuple[float, ...]:
    """Per-segment difficulty terms: one per dot, then one per gap."""
    r = model.dot_radius_px
    terms = [id_curved_tunnel(r, dot.margin_px) for dot in model.dots]
    for gap in model.gaps:
        terms.append(
            model.gap_weight * id_goal_passing(gap.length_px, gap.clearance_px + 2.0 * r)
        )
    return tuple(terms)


def _estimate_from_model(model: TunnelModel | TunnelFailure) -> LassoCostEstimate:
    if isinstance(model, TunnelFailure):
        return LassoCostEstimate(
            difficulty=math.inf,
            reason=model.reason,
            interior_negatives=model.interior_negatives,
        )
    components = tunnel_difficulty_components(model)
    return LassoCostEstimate(difficulty=sum(components), components=components)


def estimate_lasso_id(scene: ProjectedScene, gap_weight: float = 1.0) -> LassoCostEstimate:
    """Estimate the difficulty of lasso-selecting the scene's positives."""
    if gap_weight < 0.0 or not math.isfinite(gap_weight):
        raise ValueError("gap weight must be non-negative and finite")
    return _estimate_from_model(build_tunnel(scene, gap_weight))


def estimate_from_projections(
    pos_px: np.ndarray,
    neg_px: np.ndarray,
    dot_radius: float,
    gap_weight: float = 1.0,
    positives_behind: bool = False,
) -> LassoCostEstimate:
    """Estimate on pre-projected pixel positions.

    The fast entry point for viewpoint search loops that project positives
    and distractors themselves; equivalent to estimate_lasso_id on a scene
    assembled from the same projections.
    """
    if positives_behind:
        return LassoCostEstimate(
            difficulty=math.inf, reason=InfeasibleReason.BEHIND_CAMERA
        )
    return _estimate_from_model(
        build_tunnel_from_projections(pos_px, neg_px, dot_radius, gap_weight)
    )
