"""Dataset manifests, point cloud and label IO, synthetic scenes, metrics.

A dataset is a directory with a JSON manifest pointing at a point file plus
optional label files.  Two point formats are supported: raw little-endian
float32 records of x, y, z, intensity (intensity ignored) and ASCII CSV
``x,y,z`` with an optional header.  Labels are one unsigned integer per
point, either ASCII lines or packed little-endian uint32.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import PointCloud

FORMAT_XYZI = "xyzi_f32"
FORMAT_CSV = "csv"


class DataFormatError(ValueError):
    """Malformed dataset file: wrong record size, non-numeric content."""


class NonFiniteDataError(DataFormatError):
    """Dataset contains NaN or infinite coordinates."""


class LabelMismatchError(DataFormatError):
    """Label count does not match the point count."""


@dataclass
class DatasetManifest:
    """Description of one dataset on disk; paths are resolved absolute."""

    name: str
    cloud_path: Path
    cloud_format: str = FORMAT_XYZI
    semantic_label_path: Path | None = None
    instance_label_path: Path | None = None
    ground_truth_label_path: Path | None = None
    categories: dict[int, str] = field(default_factory=dict)
    angular_resolution: float | None = None
    background_categories: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.cloud_format not in (FORMAT_XYZI, FORMAT_CSV):
            raise DataFormatError(f"unknown cloud format {self.cloud_format!r}")
        if self.angular_resolution is not None and (
            not math.isfinite(self.angular_resolution) or self.angular_resolution <= 0.0
        ):
            raise DataFormatError("angular_resolution must be positive")

    @classmethod
    def from_file(cls, path: str | Path) -> "DatasetManifest":
        path = Path(path)
        try:
            raw = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise DataFormatError(f"cannot read manifest {path}: {exc}") from exc
        base = path.parent

        def resolve(key: str) -> Path | None:
            value = raw.get(key)
            if value is None:
                return None
            resolved = base / value
            if not resolved.exists():
                raise DataFormatError(f"manifest references missing file: {resolved}")
            return resolved.resolve()

        cloud_path = resolve("cloud_path")
        if cloud_path is None:
            raise DataFormatError(f"manifest {path} lacks cloud_path")
        categories = {
            int(key): str(value) for key, value in raw.get("categories", {}).items()
        }
        return cls(
            name=str(raw.get("name", path.parent.name)),
            cloud_path=cloud_path,
            cloud_format=str(raw.get("format", FORMAT_XYZI)),
            semantic_label_path=resolve("semantic_label_path"),
            instance_label_path=resolve("instance_label_path"),
            ground_truth_label_path=resolve("ground_truth_label_path"),
            categories=categories,
            angular_resolution=raw.get("angular_resolution"),
            background_categories=list(raw.get("background_categories", [])),
        )

    def background_category_ids(self) -> frozenset[int]:
        by_name = {name: cid for cid, name in self.categories.items()}
        ids = set()
        for name in self.background_categories:
            if name in by_name:
                ids.add(by_name[name])
        return frozenset(ids)

    def to_json_dict(self, relative_to: Path) -> dict:
        def rel(p: Path | None):
            return None if p is None else str(p.relative_to(relative_to))

        doc = {
            "name": self.name,
            "cloud_path": rel(self.cloud_path),
            "format": self.cloud_format,
            "categories": {str(k): v for k, v in sorted(self.categories.items())},
        }
        for key, value in (
            ("semantic_label_path", rel(self.semantic_label_path)),
            ("instance_label_path", rel(self.instance_label_path)),
            ("ground_truth_label_path", rel(self.ground_truth_label_path)),
            ("angular_resolution", self.angular_resolution),
        ):
            if value is not None:
                doc[key] = value
        if self.background_categories:
            doc["background_categories"] = list(self.background_categories)
        return doc


def load_points_xyzi(path: Path) -> np.ndarray:
    data = np.fromfile(path, dtype="<f4")
    if data.size % 4 != 0:
        raise DataFormatError(
            f"{path}: size {data.size * 4} bytes is not a multiple of 16-byte records"
        )
    points = data.reshape(-1, 4)[:, :3].astype(np.float64)
    if not np.all(np.isfinite(points)):
        raise NonFiniteDataError(f"{path}: non-finite coordinates")
    return points


def load_points_csv(path: Path) -> np.ndarray:
    try:
        text = path.read_text()
    except OSError as exc:
        raise DataFormatError(f"cannot read {path}: {exc}") from exc
    rows = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != 3:
            raise DataFormatError(f"{path}:{line_no}: expected 3 columns")
        try:
            rows.append([float(p) for p in parts])
        except ValueError:
            if line_no == 1:
                continue  # header row
            raise DataFormatError(f"{path}:{line_no}: non-numeric row") from None
    points = np.asarray(rows, dtype=np.float64).reshape(-1, 3)
    if not np.all(np.isfinite(points)):
        raise NonFiniteDataError(f"{path}: non-finite coordinates")
    return points


def load_labels(path: Path, expected_count: int) -> np.ndarray:
    """One unsigned integer per point, ASCII lines or packed LE uint32."""
    raw = Path(path).read_bytes()
    ascii_chars = set(b"0123456789 \t\r\n+-")
    looks_ascii = len(raw) > 0 and all(byte in ascii_chars for byte in raw[:4096])
    if looks_ascii:
        try:
            labels = np.array(
                [int(line) for line in raw.decode("ascii").split()], dtype=np.int64
            )
        except ValueError as exc:
            raise DataFormatError(f"{path}: bad label line: {exc}") from exc
        if np.any(labels < 0):
            raise DataFormatError(f"{path}: labels must be non-negative")
    else:
        if len(raw) % 4 != 0:
            raise DataFormatError(f"{path}: binary label size not a multiple of 4")
        labels = np.frombuffer(raw, dtype="<u4").astype(np.int64)
    if len(labels) != expected_count:
        raise LabelMismatchError(
            f"{path}: {len(labels)} labels for {expected_count} points"
        )
    return labels.astype(np.uint32)


def load_cloud(manifest: DatasetManifest) -> PointCloud:
    """Load the manifest's points and whatever labels it references."""
    if manifest.cloud_format == FORMAT_XYZI:
        points = load_points_xyzi(manifest.cloud_path)
    else:
        points = load_points_csv(manifest.cloud_path)
    semantic = None
    instance = None
    if manifest.semantic_label_path is not None:
        semantic = load_labels(manifest.semantic_label_path, len(points))
    if manifest.instance_label_path is not None:
        instance = load_labels(manifest.instance_label_path, len(points))
    return PointCloud(points=points, semantic_labels=semantic, instance_labels=instance)


def save_points_xyzi(path: Path, points: np.ndarray, intensity: np.ndarray | None = None) -> None:
    points = np.asarray(points, dtype=np.float64)
    records = np.zeros((len(points), 4), dtype="<f4")
    records[:, :3] = points.astype("<f4")
    if intensity is not None:
        records[:, 3] = np.asarray(intensity, dtype="<f4")
    records.tofile(path)


def save_labels(path: Path, labels: np.ndarray, binary: bool = False) -> None:
    labels = np.asarray(labels, dtype=np.uint32)
    if binary:
        labels.astype("<u4").tofile(path)
    else:
        Path(path).write_text("\n".join(str(int(v)) for v in labels) + "\n")


def downsample(cloud: PointCloud, target_count: int, seed: int) -> PointCloud:
    """Uniform random subsample without replacement, deterministic by seed.

    Kept rows stay in their original order so labels and derived indices
    remain stable.  Clouds at or under the target pass through unchanged.
    """
    if target_count < 1:
        raise ValueError("target count must be at least 1")
    if len(cloud) <= target_count:
        return cloud
    rng = np.random.default_rng(seed)
    keep = np.sort(rng.choice(len(cloud), size=target_count, replace=False))
    return PointCloud(
        points=cloud.points[keep],
        semantic_labels=None if cloud.semantic_labels is None else cloud.semantic_labels[keep],
        instance_labels=None if cloud.instance_labels is None else cloud.instance_labels[keep],
    )


CATEGORY_NEGATIVE = 0
CATEGORY_POSITIVE = 1

SYNTHETIC_SCENES = ("box_on_plane", "two_planes", "two_cylinders")

_SYNTH_DEFAULTS = {
    "box_on_plane": {
        "box_edge": 2.0,
        "box_points_per_edge": 20,
        "plane_size": 10.0,
        "plane_grid": (88, 89),
        "clearance": 0.5,
    },
    "two_planes": {
        "plane_size": 4.0,
        "plane_grid": (70, 70),
        "separation": 1.0,
    },
    "two_cylinders": {
        "inner_radius": 1.0,
        "outer_radius": 2.0,
        "height": 4.0,
        "inner_count": 2000,
        "outer_count": 8000,
    },
}


def _grid_plane(size_x: float, size_y: float, nx: int, ny: int) -> np.ndarray:
    xs = np.linspace(-size_x / 2.0, size_x / 2.0, nx)
    ys = np.linspace(-size_y / 2.0, size_y / 2.0, ny)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    return np.stack([gx.ravel(), gy.ravel(), np.zeros(nx * ny)], axis=1)


def _cuboid_surface(edge: float, per_edge: int) -> np.ndarray:
    side = np.linspace(-edge / 2.0, edge / 2.0, per_edge)
    gx, gy, gz = np.meshgrid(side, side, side, indexing="ij")
    lattice = np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=1)
    on_surface = np.abs(lattice).max(axis=1) >= edge / 2.0 - 1e-12
    return lattice[on_surface]


def generate_synthetic(scene: str, params: dict | None = None, seed: int = 0) -> PointCloud:
    """Generate one of the benchmark scenes with binary semantic labels.

    Category 1 is the selection target (positive), category 0 the
    distractor class (negative); both carry instance id 1.  Grid-based
    scenes are fully deterministic, the cylinder scene derives from the
    seed alone.
    """
    if scene not in SYNTHETIC_SCENES:
        raise ValueError(f"unknown scene {scene!r}; expected one of {SYNTHETIC_SCENES}")
    config = dict(_SYNTH_DEFAULTS[scene])
    config.update(params or {})

    if scene == "box_on_plane":
        edge = float(config["box_edge"])
        clearance = float(config["clearance"])
        box = _cuboid_surface(edge, int(config["box_points_per_edge"]))
        box[:, 2] += clearance + edge / 2.0
        nx, ny = config["plane_grid"]
        plane = _grid_plane(float(config["plane_size"]), float(config["plane_size"]), int(nx), int(ny))
        positive, negative = box, plane
    elif scene == "two_planes":
        nx, ny = config["plane_grid"]
        size = float(config["plane_size"])
        positive = _grid_plane(size, size, int(nx), int(ny))
        negative = _grid_plane(size, size, int(nx), int(ny))
        negative[:, 2] += float(config["separation"])
    else:
        rng = np.random.default_rng(seed)
        height = float(config["height"])
        n_inner = int(config["inner_count"])
        radii = float(config["inner_radius"]) * np.sqrt(rng.random(n_inner))
        angles = rng.random(n_inner) * 2.0 * np.pi
        positive = np.stack(
            [
                radii * np.cos(angles),
                radii * np.sin(angles),
                rng.random(n_inner) * height - height / 2.0,
            ],
            axis=1,
        )
        n_outer = int(config["outer_count"])
        outer_angles = rng.random(n_outer) * 2.0 * np.pi
        negative = np.stack(
            [
                float(config["outer_radius"]) * np.cos(outer_angles),
                float(config["outer_radius"]) * np.sin(outer_angles),
                rng.random(n_outer) * height - height / 2.0,
            ],
            axis=1,
        )

    points = np.concatenate([positive, negative])
    semantic = np.concatenate(
        [
            np.full(len(positive), CATEGORY_POSITIVE, dtype=np.uint32),
            np.full(len(negative), CATEGORY_NEGATIVE, dtype=np.uint32),
        ]
    )
    instance = np.ones(len(points), dtype=np.uint32)
    return PointCloud(points=points, semantic_labels=semantic, instance_labels=instance)


def synthetic_categories() -> dict[int, str]:
    return {CATEGORY_NEGATIVE: "negative", CATEGORY_POSITIVE: "positive"}


def miou(
    pred: np.ndarray, truth: np.ndarray, categories=None
) -> tuple[float, dict[int, float]]:
    """Mean intersection-over-union across categories.

    Per-category IoU compares the point sets labeled with that category.
    The mean runs over categories that occur in the reference labels (from
    the given category set when provided); per-category IoUs are reported
    for every category seen in either labeling.
    """
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape or pred.ndim != 1:
        raise ValueError("prediction and truth must be equal-length 1D arrays")
    present = set(np.unique(pred).tolist()) | set(np.unique(truth).tolist())
    if categories is None:
        considered = present
    else:
        considered = {int(c) for c in categories} & present
    per_category: dict[int, float] = {}
    mean_terms = []
    truth_categories = set(np.unique(truth).tolist())
    for category in sorted(considered):
        pred_mask = pred == category
        truth_mask = truth == category
        union = np.count_nonzero(pred_mask | truth_mask)
        intersection = np.count_nonzero(pred_mask & truth_mask)
        iou = intersection / union if union else 0.0
        per_category[int(category)] = iou
        if category in truth_categories:
            mean_terms.append(iou)
    if not mean_terms:
        raise ValueError("no categories present in the reference labels")
    return float(np.mean(mean_terms)), per_category
