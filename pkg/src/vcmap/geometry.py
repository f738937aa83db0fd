"""Planar primitives and predicates.

Scalar functions operate on small immutable tuples. The block/point helpers
at the bottom are numpy-vectorized and carry the quadtree inner loops.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence, Union

import numpy as np

EPS = 1e-9


class Point(NamedTuple):
    x: float
    y: float


class Segment(NamedTuple):
    a: Point
    b: Point

    @property
    def midpoint(self) -> Point:
        return Point((self.a.x + self.b.x) / 2, (self.a.y + self.b.y) / 2)

    @property
    def length(self) -> float:
        return math.hypot(self.b.x - self.a.x, self.b.y - self.a.y)


class Rect(NamedTuple):
    xmin: float
    ymin: float
    xmax: float
    ymax: float

    @classmethod
    def from_points(cls, lo: Point, hi: Point) -> "Rect":
        return cls(lo[0], lo[1], hi[0], hi[1])

    @property
    def corners(self) -> list[Point]:
        """Counterclockwise, starting at the lower-left corner."""
        return [Point(self.xmin, self.ymin), Point(self.xmax, self.ymin),
                Point(self.xmax, self.ymax), Point(self.xmin, self.ymax)]

    @property
    def center(self) -> Point:
        return Point((self.xmin + self.xmax) / 2, (self.ymin + self.ymax) / 2)

    @property
    def width(self) -> float:
        return self.xmax - self.xmin

    @property
    def height(self) -> float:
        return self.ymax - self.ymin

    @property
    def area(self) -> float:
        return self.width * self.height

    def contains_point(self, p: Point, eps: float = 0.0) -> bool:
        return (self.xmin - eps <= p[0] <= self.xmax + eps
                and self.ymin - eps <= p[1] <= self.ymax + eps)

    def intersects(self, other: "Rect") -> bool:
        """Closed-set overlap."""
        return not (other.xmin > self.xmax or other.xmax < self.xmin
                    or other.ymin > self.ymax or other.ymax < self.ymin)


def validate_rect(r: Rect) -> Rect:
    if not (r.xmin < r.xmax and r.ymin < r.ymax):
        raise ValueError(f"degenerate rectangle {r}")
    return r


@dataclass(frozen=True)
class Wedge:
    """Infinite angular sector with apex, central direction and opening, in degrees."""

    apex: Point
    gaze_deg: float
    fov_deg: float

    def __post_init__(self):
        if not 0 < self.fov_deg <= 360:
            raise ValueError("fov_deg must be in (0, 360]")

    @property
    def full(self) -> bool:
        return self.fov_deg >= 360

    def contains(self, p: Point) -> bool:
        if self.full:
            return True
        dx, dy = p[0] - self.apex[0], p[1] - self.apex[1]
        if abs(dx) <= EPS and abs(dy) <= EPS:
            return True
        rel = wrap_deg(math.degrees(math.atan2(dy, dx)) - self.gaze_deg)
        return abs(rel) <= self.fov_deg / 2 + 1e-12


class Relation(enum.Enum):
    INSIDE = "inside"
    OUTSIDE = "outside"
    PARTIAL = "partial"


Polygon = np.ndarray  # (n, 2) float array, counterclockwise


def wrap_deg(a):
    """Wrap angle(s) in degrees into [-180, 180)."""
    return (np.asarray(a) + 180.0) % 360.0 - 180.0 if isinstance(a, np.ndarray) \
        else (a + 180.0) % 360.0 - 180.0


def cross(o, a, b) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


# --------------------------------------------------------------------------
# segment / triangle against rectangles


def _clip_param(s: Segment, r: Rect) -> tuple[float, float] | None:
    """Liang-Barsky parameter interval of the part of ``s`` inside closed ``r``."""
    x0, y0 = s.a
    dx, dy = s.b[0] - x0, s.b[1] - y0
    t0, t1 = 0.0, 1.0
    for p, q in ((-dx, x0 - r.xmin), (dx, r.xmax - x0),
                 (-dy, y0 - r.ymin), (dy, r.ymax - y0)):
        if p == 0:
            if q < 0:
                return None
            continue
        t = q / p
        if p < 0:
            if t > t1:
                return None
            t0 = max(t0, t)
        else:
            if t < t0:
                return None
            t1 = min(t1, t)
    return t0, t1


def segment_intersects_rect(s: Segment, r: Rect) -> bool:
    """True when the segment meets the closed rectangle; touching counts."""
    grown = Rect(r.xmin - EPS, r.ymin - EPS, r.xmax + EPS, r.ymax + EPS)
    return _clip_param(s, grown) is not None


def _convex_separated(pa: np.ndarray, pb: np.ndarray, eps: float) -> bool:
    """Separating-axis test for two convex vertex sets (closed sets)."""
    for poly in (pa, pb):
        n = len(poly)
        for i in range(n):
            e = poly[(i + 1) % n] - poly[i]
            axis = np.array([-e[1], e[0]])
            if not axis.any():
                continue
            a = pa @ axis
            b = pb @ axis
            scale = math.hypot(axis[0], axis[1])
            if a.max() < b.min() - eps * scale or b.max() < a.min() - eps * scale:
                return True
    return False


def triangle_intersects_rect(p: Point, s: Segment, r: Rect) -> bool:
    """Closed triangle (p, s.a, s.b) against the closed rectangle."""
    if abs(cross(p, s.a, s.b)) <= EPS * max(1.0, s.length):
        pts = sorted([tuple(p), tuple(s.a), tuple(s.b)])
        return segment_intersects_rect(Segment(Point(*pts[0]), Point(*pts[-1])), r)
    tri = np.array([p, s.a, s.b], dtype=float)
    box = np.array(r.corners, dtype=float)
    return not _convex_separated(tri, box, EPS)


def tangent_vertices(p: Point, r: Rect) -> tuple[Point, Point]:
    """Vertices of ``r`` at the extreme CCW (left) and CW (right) angles seen from ``p``."""
    if r.contains_point(p, EPS):
        raise ValueError("viewpoint lies inside or on the rectangle")
    c = r.center
    ref = math.atan2(c.y - p.y, c.x - p.x)
    best = []
    for v in r.corners:
        rel = math.remainder(math.atan2(v.y - p.y, v.x - p.x) - ref, 2 * math.pi)
        best.append((rel, v))
    left = max(best, key=lambda t: (t[0], -math.dist(p, t[1])))[1]
    right = min(best, key=lambda t: (t[0], math.dist(p, t[1])))[1]
    return left, right


# --------------------------------------------------------------------------
# polygons


def polygon_area(poly) -> float:
    """Signed shoelace area (positive for counterclockwise)."""
    pts = np.asarray(poly, dtype=float)
    if len(pts) < 3:
        return 0.0
    x, y = pts[:, 0], pts[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def convex_hull(points) -> np.ndarray:
    """Andrew's monotone chain; counterclockwise, no repeated or collinear vertices."""
    pts = sorted(set(map(tuple, np.asarray(points, dtype=float).tolist())))
    if len(pts) <= 2:
        return np.array(pts, dtype=float)
    lower: list = []
    for q in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], q) <= 0:
            lower.pop()
        lower.append(q)
    upper: list = []
    for q in reversed(pts):
        while len(upper) >= 2 and cross(upper[-2], upper[-1], q) <= 0:
            upper.pop()
        upper.append(q)
    return np.array(lower[:-1] + upper[:-1], dtype=float)


def clip_polygon_to_rect(poly, r: Rect) -> np.ndarray | None:
    """Sutherland-Hodgman clip against an axis-aligned window; None when empty."""
    out = [tuple(v) for v in np.asarray(poly, dtype=float)]
    edges = (
        (lambda v: v[0] >= r.xmin, lambda a, b: _x_cut(a, b, r.xmin)),
        (lambda v: v[0] <= r.xmax, lambda a, b: _x_cut(a, b, r.xmax)),
        (lambda v: v[1] >= r.ymin, lambda a, b: _y_cut(a, b, r.ymin)),
        (lambda v: v[1] <= r.ymax, lambda a, b: _y_cut(a, b, r.ymax)),
    )
    for inside, cut in edges:
        if not out:
            break
        src, out = out, []
        prev = src[-1]
        for cur in src:
            if inside(cur):
                if not inside(prev):
                    out.append(cut(prev, cur))
                out.append(cur)
            elif inside(prev):
                out.append(cut(prev, cur))
            prev = cur
    if len(out) < 3:
        return None
    res = np.array(out, dtype=float)
    if abs(polygon_area(res)) <= EPS:
        return None
    return res


def _x_cut(a, b, x):
    t = (x - a[0]) / (b[0] - a[0])
    return (x, a[1] + t * (b[1] - a[1]))


def _y_cut(a, b, y):
    t = (y - a[1]) / (b[1] - a[1])
    return (a[0] + t * (b[0] - a[0]), y)


def point_in_polygon(p: Point, poly) -> bool:
    """Even-odd rule; boundary points count as inside."""
    pts = np.asarray(poly, dtype=float)
    n = len(pts)
    inside = False
    for i in range(n):
        a, b = pts[i], pts[(i + 1) % n]
        if _on_segment(p, a, b):
            return True
        if (a[1] > p[1]) != (b[1] > p[1]):
            xc = a[0] + (p[1] - a[1]) * (b[0] - a[0]) / (b[1] - a[1])
            if xc > p[0]:
                inside = not inside
    return inside


def _on_segment(p, a, b) -> bool:
    if abs(cross(a, b, p)) > EPS * max(1.0, math.dist(a, b)):
        return False
    return (min(a[0], b[0]) - EPS <= p[0] <= max(a[0], b[0]) + EPS
            and min(a[1], b[1]) - EPS <= p[1] <= max(a[1], b[1]) + EPS)


def classify_rect_vs_polygon(block: Rect, poly) -> Relation:
    """Inside, Outside or Partial relation of a block to a simple polygon."""
    pts = np.asarray(poly, dtype=float)
    inner = Rect(block.xmin + EPS, block.ymin + EPS, block.xmax - EPS, block.ymax - EPS)
    n = len(pts)
    for i in range(n):
        seg = Segment(Point(*pts[i]), Point(*pts[(i + 1) % n]))
        if _clip_param(seg, inner) is not None:
            return Relation.PARTIAL
    return Relation.INSIDE if point_in_polygon(block.center, pts) else Relation.OUTSIDE


def wedge_classify(block: Rect, w: Wedge) -> Relation:
    rel = classify_blocks_wedge(np.array([block.xmin]), np.array([block.ymin]),
                                np.array([block.xmax]), np.array([block.ymax]), w)
    return (Relation.OUTSIDE, Relation.INSIDE, Relation.PARTIAL)[int(rel[0])]


# --------------------------------------------------------------------------
# distances


def point_segment_distance(p: Point, s: Segment) -> float:
    ax, ay = s.a
    dx, dy = s.b[0] - ax, s.b[1] - ay
    L2 = dx * dx + dy * dy
    t = 0.0 if L2 == 0 else max(0.0, min(1.0, ((p[0] - ax) * dx + (p[1] - ay) * dy) / L2))
    return math.hypot(p[0] - ax - t * dx, p[1] - ay - t * dy)


def point_rect_distance(p: Point, r: Rect) -> float:
    dx = max(r.xmin - p[0], 0.0, p[0] - r.xmax)
    dy = max(r.ymin - p[1], 0.0, p[1] - r.ymax)
    return math.hypot(dx, dy)


def rect_rect_distance(a: Rect, b: Rect) -> float:
    dx = max(b.xmin - a.xmax, 0.0, a.xmin - b.xmax)
    dy = max(b.ymin - a.ymax, 0.0, a.ymin - b.ymax)
    return math.hypot(dx, dy)


def mindist(a: Union[Rect, Point], b: Union[Rect, Segment]) -> float:
    """Euclidean distance between two closed sets (0 when they meet)."""
    if isinstance(a, Rect) and isinstance(b, Rect):
        return rect_rect_distance(a, b)
    if isinstance(b, Rect):
        return point_rect_distance(a, b)
    if isinstance(a, Rect):
        if segment_intersects_rect(b, a):
            return 0.0
        d = min(point_rect_distance(b.a, a), point_rect_distance(b.b, a))
        for c in a.corners:
            d = min(d, point_segment_distance(c, b))
        return d
    return point_segment_distance(a, b)


# --------------------------------------------------------------------------
# vectorized block classification


def blocks_vs_convex(x0, y0, x1, y1, poly: np.ndarray) -> np.ndarray:
    """Classify many axis-aligned blocks against one convex CCW polygon.

    Returns an int8 array: 0 outside, 1 inside, 2 partial. Touching along a
    boundary is not an interior overlap and counts as outside.
    """
    pts = np.asarray(poly, dtype=float)
    n = len(pts)
    cx = np.stack([x0, x1, x1, x0], axis=1)
    cy = np.stack([y0, y0, y1, y1], axis=1)
    all_in = np.ones(len(x0), dtype=bool)
    separated = np.zeros(len(x0), dtype=bool)
    separated |= (x1 <= pts[:, 0].min() + EPS) | (x0 >= pts[:, 0].max() - EPS)
    separated |= (y1 <= pts[:, 1].min() + EPS) | (y0 >= pts[:, 1].max() - EPS)
    for i in range(n):
        ax, ay = pts[i]
        ex, ey = pts[(i + 1) % n] - pts[i]
        L = math.hypot(ex, ey)
        if L == 0:
            continue
        # signed distance of block corners to the edge line, positive = inner side
        side = (ex * (cy - ay) - ey * (cx - ax)) / L
        all_in &= (side >= -EPS).all(axis=1)
        separated |= (side <= EPS).all(axis=1)
    out = np.full(len(x0), 2, dtype=np.int8)
    out[all_in] = 1
    out[separated] = 0
    return out


def points_in_convex(px, py, poly: np.ndarray) -> np.ndarray:
    pts = np.asarray(poly, dtype=float)
    inside = np.ones(len(px), dtype=bool)
    for i in range(len(pts)):
        ax, ay = pts[i]
        ex, ey = pts[(i + 1) % len(pts)] - pts[i]
        inside &= ex * (py - ay) - ey * (px - ax) >= -EPS * max(1.0, math.hypot(ex, ey))
    return inside


def block_polar_extent(x0, y0, x1, y1, cx: float, cy: float):
    """Distance range and angular interval of blocks as seen from (cx, cy).

    Returns (dmin, dmax, mid_deg, half_lo, half_hi, has_apex) where the angular
    interval is ``[mid + half_lo, mid + half_hi]`` in degrees and ``has_apex``
    flags blocks containing the apex (angular interval then meaningless).
    """
    dx = np.maximum.reduce([x0 - cx, np.zeros_like(x0), cx - x1])
    dy = np.maximum.reduce([y0 - cy, np.zeros_like(y0), cy - y1])
    dmin = np.hypot(dx, dy)
    fx = np.maximum(np.abs(x0 - cx), np.abs(x1 - cx))
    fy = np.maximum(np.abs(y0 - cy), np.abs(y1 - cy))
    dmax = np.hypot(fx, fy)
    has_apex = dmin <= EPS
    mid = np.degrees(np.arctan2((y0 + y1) / 2 - cy, (x0 + x1) / 2 - cx))
    lo = np.zeros_like(x0)
    hi = np.zeros_like(x0)
    for xx, yy in ((x0, y0), (x1, y0), (x1, y1), (x0, y1)):
        a = wrap_deg(np.degrees(np.arctan2(yy - cy, xx - cx)) - mid)
        lo = np.minimum(lo, a)
        hi = np.maximum(hi, a)
    return dmin, dmax, mid, lo, hi, has_apex


def classify_blocks_wedge(x0, y0, x1, y1, w: Wedge) -> np.ndarray:
    """0 outside, 1 inside, 2 partial for blocks against an infinite wedge."""
    x0, y0, x1, y1 = (np.asarray(v, dtype=float) for v in (x0, y0, x1, y1))
    if w.full:
        return np.ones(len(x0), dtype=np.int8)
    _, _, mid, lo, hi, has_apex = block_polar_extent(x0, y0, x1, y1, *w.apex)
    half = w.fov_deg / 2 + 1e-12
    # block interval relative to the gaze direction; it spans less than 180
    # degrees, so one-turn shifts cover every wrap-around case
    c = wrap_deg(mid - w.gaze_deg)
    blo, bhi = c + lo, c + hi
    inside = np.zeros(len(x0), dtype=bool)
    overlap = np.zeros(len(x0), dtype=bool)
    for k in (-360.0, 0.0, 360.0):
        inside |= (blo + k >= -half) & (bhi + k <= half)
        overlap |= (blo + k < half - 2e-12) & (bhi + k > -half + 2e-12)
    out = np.full(len(x0), 2, dtype=np.int8)
    out[inside] = 1
    out[~overlap & ~inside] = 0
    out[has_apex] = 2
    return out


def points_in_wedge(px, py, w: Wedge) -> np.ndarray:
    if w.full:
        return np.ones(len(px), dtype=bool)
    dx, dy = px - w.apex[0], py - w.apex[1]
    rel = wrap_deg(np.degrees(np.arctan2(dy, dx)) - w.gaze_deg)
    at_apex = (np.abs(dx) <= EPS) & (np.abs(dy) <= EPS)
    return (np.abs(rel) <= w.fov_deg / 2 + 1e-12) | at_apex


def segments_hit_rects(px, py, s: Segment, rects: Sequence[Rect]) -> np.ndarray:
    """For many viewpoints, whether the closed triangle (p, s.a, s.b) meets any rect.

    This is the brute-force full-visibility predicate used by oracles: a point
    sees the whole target iff none of its triangles touches an obstacle.
    """
    px = np.asarray(px, dtype=float)
    py = np.asarray(py, dtype=float)
    hit = np.zeros(len(px), dtype=bool)
    ax, ay = s.a
    bx, by = s.b
    for r in rects:
        sep = np.zeros(len(px), dtype=bool)
        # rect axes
        sep |= (np.maximum.reduce([px, np.full_like(px, ax), np.full_like(px, bx)]) < r.xmin - EPS)
        sep |= (np.minimum.reduce([px, np.full_like(px, ax), np.full_like(px, bx)]) > r.xmax + EPS)
        sep |= (np.maximum.reduce([py, np.full_like(py, ay), np.full_like(py, by)]) < r.ymin - EPS)
        sep |= (np.minimum.reduce([py, np.full_like(py, ay), np.full_like(py, by)]) > r.ymax + EPS)
        corners = r.corners
        # triangle edge normals; a degenerate triangle collapses to a segment
        # and its single normal is still a valid separating axis
        for (ux, uy, vx, vy, wx, wy) in (
            (px, py, ax, ay, bx, by),
            (ax, ay, bx, by, px, py),
            (bx, by, px, py, ax, ay),
        ):
            nx, ny = -(vy - uy), vx - ux
            ref = nx * (wx - ux) + ny * (wy - uy)
            tol = EPS * np.hypot(nx, ny)
            proj = [nx * (c[0] - ux) + ny * (c[1] - uy) for c in corners]
            sep |= np.maximum.reduce(proj) < np.minimum(ref, 0) - tol
            sep |= np.minimum.reduce(proj) > np.maximum(ref, 0) + tol
        hit |= ~sep
    return hit
