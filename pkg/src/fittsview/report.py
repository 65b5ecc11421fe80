"""Render recommendation results to delimited files and figures.

Everything here consumes the same structures the CLI emits as JSON and
turns them into a CSV summary plus, per instance, the full difficulty grid
as CSV, a difficulty heatmap over (alpha, beta), and a projected scatter of
the scene from the chosen viewpoint.  Figures are written as PNG files next
to the delimited output; nothing opens a display.
"""

from __future__ import annotations

import csv
import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .geometry import PointCloud, Viewport, project_points
from .lasso_cost import LassoCostEstimate
from .optimizer import GridSpec, ViewpointRecommendation


def write_recommendations_csv(path: Path, recommendations: list[ViewpointRecommendation]) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(
            [
                "rank", "category", "instance_id", "alpha", "beta", "distance",
                "target_x", "target_y", "target_z", "difficulty", "reason",
            ]
        )
        for rec in recommendations:
            vp = rec.viewpoint
            feasible = rec.estimate.feasible
            writer.writerow(
                [
                    rec.rank, rec.category, rec.instance_id,
                    repr(vp.alpha), repr(vp.beta), repr(vp.distance),
                    repr(vp.target[0]), repr(vp.target[1]), repr(vp.target[2]),
                    repr(rec.estimate.difficulty) if feasible else "infeasible",
                    "" if feasible else rec.estimate.reason.value,
                ]
            )


def write_grid_csv(
    path: Path, scored: list[tuple[float, float, LassoCostEstimate]]
) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["alpha", "beta", "difficulty", "reason"])
        for alpha, beta, estimate in scored:
            writer.writerow(
                [
                    repr(alpha), repr(beta),
                    repr(estimate.difficulty) if estimate.feasible else "infeasible",
                    "" if estimate.feasible else estimate.reason.value,
                ]
            )


def plot_difficulty_heatmap(
    path: Path,
    scored: list[tuple[float, float, LassoCostEstimate]],
    grid: GridSpec,
    title: str,
) -> None:
    """Difficulty over the search grid; infeasible candidates left blank."""
    alphas = grid.alphas()
    betas = grid.betas()
    values = np.full((len(betas), len(alphas)), np.nan)
    by_angle = {(alpha, beta): est for alpha, beta, est in scored}
    for bi, beta in enumerate(betas):
        for ai, alpha in enumerate(alphas):
            estimate = by_angle[(float(alpha), float(beta))]
            if estimate.feasible:
                values[bi, ai] = estimate.difficulty
    fig, ax = plt.subplots(figsize=(8.0, 4.5))
    mesh = ax.imshow(
        values,
        origin="lower",
        aspect="auto",
        extent=(alphas[0], alphas[-1], betas[0], betas[-1]),
        cmap="viridis",
    )
    fig.colorbar(mesh, ax=ax, label="difficulty")
    ax.set_xlabel("alpha (rad)")
    ax.set_ylabel("beta (rad)")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_projected_scene(
    path: Path,
    cloud: PointCloud,
    instance_indices: np.ndarray,
    viewpoint,
    viewport: Viewport,
    title: str,
) -> None:
    """Scatter of the cloud from a viewpoint, instance points highlighted."""
    positions, depth = project_points(cloud.points, viewpoint, viewport)
    member = np.zeros(len(cloud), dtype=bool)
    member[np.asarray(instance_indices, dtype=np.int64)] = True
    visible = depth > 0.0
    fig, ax = plt.subplots(figsize=(8.0, 4.5))
    neg = visible & ~member
    pos = visible & member
    ax.scatter(positions[neg, 0], positions[neg, 1], s=2.0, c="0.7", linewidths=0)
    ax.scatter(positions[pos, 0], positions[pos, 1], s=3.0, c="tab:red", linewidths=0)
    ax.set_xlim(0, viewport.width_px)
    ax.set_ylim(viewport.height_px, 0)  # pixel v grows downward
    ax.set_aspect("equal")
    ax.set_xlabel("u (px)")
    ax.set_ylabel("v (px)")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
