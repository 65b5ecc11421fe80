"""Index-of-difficulty models for pointer movement through constrained paths.

The models grade from coarse to fine:

* goal passing: cross one gap of a given width,
* fixed tunnel: steer along a corridor of constant width,
* general tunnel: steer along a corridor whose width varies with arc length,
* curved tunnel around a disc: steer a half loop around a dot of radius r
  kept clear of obstacles by W on either side,
* dotted tunnel: a closed loop alternating k+1 dots and k gaps, the model a
  lasso stroke around a row of rendered points has to follow.

All functions return a dimensionless index of difficulty.  Movement time is
assumed affine in that index, so comparing indices compares effort.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np


def id_goal_passing(distance: float, width: float) -> float:
    """Difficulty of crossing a gap of size ``width`` after ``distance``.

    The Shannon form log2(D / W + 1) is used, so a zero-length approach has
    zero difficulty and difficulty grows without bound as the gap closes.
    """
    if not math.isfinite(distance) or distance < 0.0:
        raise ValueError(f"distance must be non-negative, got {distance!r}")
    if math.isnan(width) or width <= 0.0:
        raise ValueError(f"width must be positive, got {width!r}")
    return math.log2(distance / width + 1.0)


def id_fixed_tunnel(distance: float, width: float) -> float:
    """Difficulty of steering a straight tunnel of constant ``width``."""
    if not math.isfinite(distance) or distance < 0.0:
        raise ValueError(f"distance must be non-negative, got {distance!r}")
    if math.isnan(width) or width <= 0.0:
        raise ValueError(f"width must be positive, got {width!r}")
    return distance / width


@dataclass(frozen=True)
class WidthProfile:
    """Tunnel width as a function of arc length along the path.

    ``width_at`` must be positive over [0, total_length].  Profiles can be
    built from sample points (piecewise linear) or from a callable.
    """

    total_length: float
    width_at: Callable[[float], float]

    def __post_init__(self) -> None:
        if not math.isfinite(self.total_length) or self.total_length <= 0.0:
            raise ValueError("total length must be positive")

    @classmethod
    def from_samples(
        cls, arc_lengths: Sequence[float], widths: Sequence[float]
    ) -> "WidthProfile":
        s = np.asarray(arc_lengths, dtype=np.float64)
        w = np.asarray(widths, dtype=np.float64)
        if s.ndim != 1 or s.shape != w.shape or len(s) < 2:
            raise ValueError("need matching 1D arrays with at least 2 samples")
        if not np.all(np.isfinite(s)) or not np.all(np.isfinite(w)):
            raise ValueError("samples must be finite")
        if s[0] != 0.0 or np.any(np.diff(s) <= 0.0):
            raise ValueError("arc lengths must start at 0 and increase strictly")
        if np.any(w <= 0.0):
            raise ValueError("all width samples must be positive")

        def width_at(t: float) -> float:
            return float(np.interp(t, s, w))

        return cls(total_length=float(s[-1]), width_at=width_at)

    @classmethod
    def from_function(
        cls, fn: Callable[[float], float], total_length: float
    ) -> "WidthProfile":
        return cls(total_length=float(total_length), width_at=fn)


def _adaptive_simpson(
    fn: Callable[[float], float],
    a: float,
    fa: float,
    m: float,
    fm: float,
    b: float,
    fb: float,
    whole: float,
    tol: float,
    depth: int,
) -> float:
    lm = 0.5 * (a + m)
    rm = 0.5 * (m + b)
    flm = fn(lm)
    frm = fn(rm)
    left = (m - a) / 6.0 * (fa + 4.0 * flm + fm)
    right = (b - m) / 6.0 * (fm + 4.0 * frm + fb)
    delta = left + right - whole
    # Depth floor guards against early agreement on symmetric integrands.
    if depth <= 0 or (depth <= 46 and abs(delta) <= 15.0 * tol):
        return left + right + delta / 15.0
    half_tol = tol / 2.0
    return _adaptive_simpson(
        fn, a, fa, lm, flm, m, fm, left, half_tol, depth - 1
    ) + _adaptive_simpson(fn, m, fm, rm, frm, b, fb, right, half_tol, depth - 1)


def id_general_tunnel(profile: WidthProfile, rel_tol: float = 1e-9) -> float:
    """Difficulty of steering a tunnel with varying width.

    Integrates ds / width(s) over the whole path with adaptive Simpson
    quadrature refined until the requested relative tolerance is met.
    """
    if not 0.0 < rel_tol < 1.0:
        raise ValueError("relative tolerance must lie in (0, 1)")

    def integrand(s: float) -> float:
        w = profile.width_at(s)
        if math.isnan(w) or w <= 0.0:
            raise ValueError(f"width must be positive along the path, got {w!r} at {s!r}")
        return 1.0 / w

    total = 0.0
    # A coarse fixed split seeds the error scale before adaptive refinement.
    edges = np.linspace(0.0, profile.total_length, 9)
    values = [integrand(float(s)) for s in edges]
    rough = 0.0
    for i in range(8):
        rough += (edges[i + 1] - edges[i]) * 0.5 * (values[i] + values[i + 1])
    tol_abs = max(rel_tol * abs(rough), 1e-300) / 8.0
    for i in range(8):
        a, b = float(edges[i]), float(edges[i + 1])
        m = 0.5 * (a + b)
        fa, fb = values[i], values[i + 1]
        fm = integrand(m)
        whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)
        total += _adaptive_simpson(fn=integrand, a=a, fa=fa, m=m, fm=fm, b=b, fb=fb,
                                   whole=whole, tol=tol_abs, depth=48)
    return total


def id_curved_tunnel(dot_radius: float, clearance: float) -> float:
    """Difficulty of steering the half loop around one rendered dot.

    The stroke passes a disc of radius ``dot_radius`` while keeping at least
    ``clearance`` of free space between the stroke corridor and the nearest
    obstacle.  Evaluates the arc integral of the loop in closed form.  An
    infinite clearance gives zero difficulty.
    """
    if math.isnan(dot_radius) or dot_radius < 0.0:
        raise ValueError(f"dot radius must be non-negative, got {dot_radius!r}")
    if math.isnan(clearance) or clearance <= 0.0:
        raise ValueError(f"clearance must be positive, got {clearance!r}")
    if math.isinf(clearance):
        return 0.0
    ratio = 2.0 * dot_radius / (clearance + 2.0 * dot_radius)
    if ratio >= 1.0:
        raise ValueError("clearance vanished relative to the dot radius")
    return (math.pi / 2.0 + math.asin(ratio)) / math.sqrt(1.0 - ratio * ratio) - math.pi / 2.0


@dataclass(frozen=True)
class DottedTunnelParams:
    """Geometry of a closed dotted tunnel.

    ``num_gaps`` straight gaps of length ``gap_length`` alternate with
    ``num_gaps + 1`` dots of radius ``dot_radius``; the corridor keeps
    ``clearance`` of free space throughout.  ``gap_weight`` scales the gap
    terms relative to the dot terms when the two movement phases are not
    equally costly per unit of difficulty.
    """

    num_gaps: int
    clearance: float
    dot_radius: float
    gap_length: float
    gap_weight: float = 1.0

    def __post_init__(self) -> None:
        if self.num_gaps < 1:
            raise ValueError("need at least one gap")
        if not math.isfinite(self.clearance) or self.clearance <= 0.0:
            raise ValueError("clearance must be positive")
        if not math.isfinite(self.dot_radius) or self.dot_radius < 0.0:
            raise ValueError("dot radius must be non-negative")
        if not math.isfinite(self.gap_length) or self.gap_length < 0.0:
            raise ValueError("gap length must be non-negative")
        if not math.isfinite(self.gap_weight) or self.gap_weight < 0.0:
            raise ValueError("gap weight must be non-negative")

    @property
    def total_length(self) -> float:
        """Path length: every dot crossed once plus all straight gaps."""
        return 2.0 * self.dot_radius * (self.num_gaps + 1) + self.gap_length * self.num_gaps


def id_dotted_tunnel(params: DottedTunnelParams) -> float:
    """Difficulty of one full pass around a dotted tunnel.

    Each of the k+1 dots contributes a curved-tunnel term and each of the k
    gaps contributes a weighted goal-passing term with effective width
    ``clearance + 2 * dot_radius``.
    """
    k = params.num_gaps
    dot_term = id_curved_tunnel(params.dot_radius, params.clearance)
    gap_term = id_goal_passing(
        params.gap_length, params.clearance + 2.0 * params.dot_radius
    )
    return (k + 1) * dot_term + params.gap_weight * k * gap_term


def dotted_tunnel_bounds(params: DottedTunnelParams) -> tuple[float, float]:
    """Lower and upper difficulty bounds for a dotted tunnel.

    The lower bound treats all gap travel as one goal-passing movement per
    gap with the dots removed; the upper bound steers the whole length as a
    fixed tunnel of the corridor width.
    """
    k = params.num_gaps
    d_total = params.total_length
    free = d_total - 2.0 * params.dot_radius * (k + 1)
    lower = params.gap_weight * k * id_goal_passing(
        free / k, params.clearance + 2.0 * params.dot_radius
    )
    upper = id_fixed_tunnel(d_total, params.clearance)
    return lower, upper
