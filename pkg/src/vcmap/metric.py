"""Visual-angle visibility model."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

import numpy as np

from .geometry import Point, Rect, Segment, Wedge, segments_hit_rects, triangle_intersects_rect


@dataclass(frozen=True)
class Target:
    geom: Segment
    midpoint: Point = field(init=False)
    length_S: float = field(init=False)
    direction_deg: float = field(init=False)

    def __post_init__(self):
        a, b = self.geom
        length = math.hypot(b[0] - a[0], b[1] - a[1])
        if length <= 0:
            raise ValueError("target must have positive length")
        object.__setattr__(self, "geom", Segment(Point(*a), Point(*b)))
        object.__setattr__(self, "midpoint", Point((a[0] + b[0]) / 2, (a[1] + b[1]) / 2))
        object.__setattr__(self, "length_S", length)
        object.__setattr__(self, "direction_deg", math.degrees(math.atan2(b[1] - a[1], b[0] - a[0])))

    @classmethod
    def centered(cls, center: Point, length: float, direction_deg: float = 0.0) -> "Target":
        ux = math.cos(math.radians(direction_deg)) * length / 2
        uy = math.sin(math.radians(direction_deg)) * length / 2
        return cls(Segment(Point(center[0] - ux, center[1] - uy),
                           Point(center[0] + ux, center[1] + uy)))

    def to_local(self, px, py):
        """World -> target frame (origin at midpoint, x along the target)."""
        c = math.cos(math.radians(self.direction_deg))
        s = math.sin(math.radians(self.direction_deg))
        dx = np.asarray(px, dtype=float) - self.midpoint.x
        dy = np.asarray(py, dtype=float) - self.midpoint.y
        return c * dx + s * dy, -s * dx + c * dy

    def to_world(self, lx, ly):
        c = math.cos(math.radians(self.direction_deg))
        s = math.sin(math.radians(self.direction_deg))
        lx = np.asarray(lx, dtype=float)
        ly = np.asarray(ly, dtype=float)
        return self.midpoint.x + c * lx - s * ly, self.midpoint.y + s * lx + c * ly


@dataclass(frozen=True)
class VisionParams:
    mu_arcmin: float = 4.0
    d0: float = 1.0
    fov_deg: float = 120.0
    gaze_deg: float = 90.0
    inside_nearpoint: str = "clamp"

    def __post_init__(self):
        if self.mu_arcmin <= 0 or self.d0 <= 0:
            raise ValueError("mu_arcmin and d0 must be positive")
        if not 0 < self.fov_deg <= 360:
            raise ValueError("fov_deg must be in (0, 360]")
        if self.inside_nearpoint not in ("clamp", "zero"):
            raise ValueError("inside_nearpoint must be 'clamp' or 'zero'")

    @property
    def mu_deg(self) -> float:
        return self.mu_arcmin / 60.0

    @property
    def mu_rad(self) -> float:
        return math.radians(self.mu_deg)

    def wedge(self, apex: Point) -> Wedge:
        return Wedge(apex, self.gaze_deg, self.fov_deg)


class ViewGeometry(NamedTuple):
    D: float
    alpha_deg: float


def visual_angle(S, D):
    """Angle in degrees subtended by a length ``S`` seen face-on from distance ``D``."""
    D_arr = np.asarray(D, dtype=float)
    if np.any(D_arr <= 0):
        raise ValueError("distance must be positive")
    out = np.degrees(2.0 * np.arctan(np.asarray(S, dtype=float) / (2.0 * D_arr)))
    return float(out) if out.ndim == 0 else out


def perceived_length(S, alpha_deg):
    """Oblique-projection length: linear in the viewing angle, full at 90 degrees."""
    a = np.asarray(alpha_deg, dtype=float)
    if np.any((a < 0) | (a > 90)):
        raise ValueError("alpha_deg must lie in [0, 90]")
    out = a / 90.0 * np.asarray(S, dtype=float)
    return float(out) if out.ndim == 0 else out


def view_geometry(p: Point, t: Target) -> ViewGeometry:
    lx, ly = t.to_local(p[0], p[1])
    D = float(math.hypot(lx, ly))
    alpha = float(fold_alpha(lx, ly))
    return ViewGeometry(D, alpha)


def fold_alpha(lx, ly):
    """Viewing angle in [0, 90] from target-frame coordinates."""
    ax = np.abs(np.asarray(lx, dtype=float))
    ay = np.abs(np.asarray(ly, dtype=float))
    return np.degrees(np.arctan2(ay, ax))


def norm_angle(t: Target, vp: VisionParams) -> float:
    """Visual angle at the near point, head-on; the color-1 anchor."""
    return visual_angle(t.length_S, vp.d0)


def color_from_polar(D, alpha_deg, t: Target, vp: VisionParams):
    """Normalized visibility from distance to the midpoint and folded viewing angle."""
    D = np.asarray(D, dtype=float)
    alpha = np.asarray(alpha_deg, dtype=float)
    D_eff = np.maximum(D, vp.d0)
    V = np.degrees(2.0 * np.arctan(alpha / 90.0 * t.length_S / (2.0 * D_eff)))
    c = np.minimum(V / norm_angle(t, vp), 1.0)
    c = np.where(V < vp.mu_deg, 0.0, c)
    if vp.inside_nearpoint == "zero":
        c = np.where(D < vp.d0, 0.0, c)
    return c


def colors_at(px, py, t: Target, vp: VisionParams) -> np.ndarray:
    lx, ly = t.to_local(px, py)
    return color_from_polar(np.hypot(lx, ly), fold_alpha(lx, ly), t, vp)


def visibility_color(p: Point, t: Target, vp: VisionParams) -> float:
    """Normalized visibility of the target from ``p`` ignoring obstacles.

    The near-point region is clamped (or zeroed, per ``vp.inside_nearpoint``),
    and anything subtending less than the angular resolution is 0.
    """
    return float(colors_at(np.array([p[0]]), np.array([p[1]]), t, vp)[0])


def _coincident(o: Rect, t: Target) -> bool:
    a, b = t.geom
    return (abs(o.xmin - min(a.x, b.x)) < 1e-9 and abs(o.xmax - max(a.x, b.x)) < 1e-9
            and abs(o.ymin - min(a.y, b.y)) < 1e-9 and abs(o.ymax - max(a.y, b.y)) < 1e-9)


def fully_visible(p: Point, t: Target, obstacles: Iterable[Rect]) -> bool:
    """True iff every sightline from ``p`` to every point of the target is clear."""
    for o in obstacles:
        if _coincident(o, t):
            continue
        if triangle_intersects_rect(p, t.geom, o):
            return False
    return True


def fully_visible_many(px, py, t: Target, obstacles: Iterable[Rect]) -> np.ndarray:
    rects = [o for o in obstacles if not _coincident(o, t)]
    return ~segments_hit_rects(px, py, t.geom, rects)


def d_max(S: float, mu_arcmin: float) -> float:
    """Distance at which the target subtends exactly the angular resolution."""
    return S / (2.0 * math.tan(math.radians(mu_arcmin / 60.0) / 2.0))
