"""Engine configuration with a fixed precedence: flags, then a config file
named by the FITTSVIEW_CONFIG environment variable, then built-in defaults.

The defaults are the constants the whole pipeline is calibrated around:
pi/12 grid strides, a 1920x1080 viewport with a 45 degree vertical field of
view and 2 px dots, DBSCAN at min_pts 10 with radius factor 100, a 20%
instance size cutoff, and ground excluded from recommendations.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, fields, replace
from pathlib import Path

from .geometry import Viewport
from .optimizer import GridSpec

CONFIG_ENV_VAR = "FITTSVIEW_CONFIG"


@dataclass(frozen=True)
class EngineConfig:
    gap_weight: float = 1.0
    alpha_stride: float = math.pi / 12.0
    beta_stride: float = math.pi / 12.0
    viewport_width: int = 1920
    viewport_height: int = 1080
    vertical_fov_rad: float = math.pi / 4.0
    dot_radius_px: float = 2.0
    min_pts: int = 10
    eps_factor: float = 100.0
    size_cutoff: float = 0.2
    excluded_categories: tuple[str, ...] = ("ground",)
    seed: int = 0
    min_camera_distance: float = 1.0
    workers: int = 1
    host: str = "127.0.0.1"
    port: int = 8000

    def viewport(self) -> Viewport:
        return Viewport(
            width_px=self.viewport_width,
            height_px=self.viewport_height,
            vertical_fov_rad=self.vertical_fov_rad,
            dot_radius_px=self.dot_radius_px,
        )

    def grid(self) -> GridSpec:
        return GridSpec(alpha_stride=self.alpha_stride, beta_stride=self.beta_stride)


_FIELD_NAMES = {f.name for f in fields(EngineConfig)}


def load_config_file(path: str | Path) -> dict:
    """Read config overrides from a JSON file; unknown keys are rejected."""
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ValueError(f"cannot read config file {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ValueError(f"config file {path} must hold a JSON object")
    unknown = set(raw) - _FIELD_NAMES
    if unknown:
        raise ValueError(f"config file {path} has unknown keys: {sorted(unknown)}")
    if "excluded_categories" in raw:
        raw["excluded_categories"] = tuple(raw["excluded_categories"])
    return raw


def resolve_config(overrides: dict | None = None, env: dict | None = None) -> EngineConfig:
    """Defaults, overlaid by the FITTSVIEW_CONFIG file, overlaid by flags."""
    env = os.environ if env is None else env
    config = EngineConfig()
    config_path = env.get(CONFIG_ENV_VAR)
    if config_path:
        config = replace(config, **load_config_file(config_path))
    if overrides:
        unknown = set(overrides) - _FIELD_NAMES
        if unknown:
            raise ValueError(f"unknown config overrides: {sorted(unknown)}")
        config = replace(config, **overrides)
    # Construction validates viewport and grid invariants early.
    config.viewport()
    config.grid()
    return config
