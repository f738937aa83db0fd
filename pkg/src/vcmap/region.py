"""Visible region: field-of-view wedge minus obstacle shadows, on a quadtree."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import (EPS, Rect, Wedge, blocks_vs_convex, classify_blocks_wedge, clip_polygon_to_rect,
                       convex_hull, mindist, points_in_convex, points_in_wedge,
                       segment_intersects_rect)
from .metric import Target, VisionParams, d_max
from .quadtree import (CAUSE_FOV, CAUSE_SHADOW, CAUSE_SHADOW_CENTER, OBSTRUCTED, VISIBLE,
                       QuadTree, QuerySpace)
from .rtree import AccessStats, ObstacleIndex, ObstacleRect, incremental_retrieve


@dataclass
class ShadowPolygon:
    poly: np.ndarray | None   # convex, counterclockwise; None when clipped away
    source_obstacle: int

    @property
    def empty(self) -> bool:
        return self.poly is None


def init_fov(space: QuerySpace, t: Target, vp: VisionParams, theta: float) -> QuadTree:
    """Quadtree with everything outside the view wedge marked obstructed."""
    tree = QuadTree(space, theta)
    w = vp.wedge(t.midpoint)
    if w.full:
        return tree

    def outside(x0, y0, x1, y1):
        c = classify_blocks_wedge(x0, y0, x1, y1, w)
        return np.choose(c, [1, 0, 2]).astype(np.int8)

    def center_out(px, py):
        return ~points_in_wedge(px, py, w)

    tree.refine(np.ones(1, dtype=bool), outside, center_out, OBSTRUCTED, CAUSE_FOV, CAUSE_FOV)
    return tree


_DIRECTIONS = 17  # rays sampled per target point across the obstacle's angular span


def shadow_hull(t: Target, r: Rect, reach: float) -> np.ndarray | None:
    """Convex hull covering the shadow of ``r`` out to distance ``reach``.

    Every shadow point lies on a ray leaving a target point and passing
    through the rectangle, beyond it. The hull is built from the rectangle's
    corners and far points of such rays, sampled densely enough along the
    target and in angle that the far edge of the hull stays beyond ``reach``.
    Returns None when the rectangle touches the target.
    """
    if segment_intersects_rect(t.geom, r):
        return None
    a = np.array(t.geom.a, dtype=float)
    b = np.array(t.geom.b, dtype=float)
    corners = np.array(r.corners, dtype=float)
    gap = mindist(r, t.geom)
    n_src = int(min(257, max(9, math.ceil(t.length_S / max(gap, 1e-9)) + 1)))
    lam = np.linspace(0.0, 1.0, n_src)
    src = a[None, :] + lam[:, None] * (b - a)[None, :]
    ctr = np.array(r.center, dtype=float)
    base = np.arctan2(ctr[1] - src[:, 1], ctr[0] - src[:, 0])
    rel = np.arctan2(corners[None, :, 1] - src[:, None, 1], corners[None, :, 0] - src[:, None, 0])
    rel = (rel - base[:, None] + math.pi) % (2 * math.pi) - math.pi
    lo, hi = rel.min(axis=1), rel.max(axis=1)
    f = np.linspace(0.0, 1.0, _DIRECTIONS)
    ang = base[:, None] + lo[:, None] + f[None, :] * (hi - lo)[:, None]
    L = 8.0 * reach
    far = np.stack([src[:, None, 0] + L * np.cos(ang), src[:, None, 1] + L * np.sin(ang)], axis=2)
    return convex_hull(np.concatenate([corners, far.reshape(-1, 2)]))


def _reach(t: Target, r: Rect, space: QuerySpace) -> float:
    reach = 0.0
    for c in space.corners:
        for p in (t.geom.a, t.geom.b, *r.corners):
            reach = max(reach, math.dist(c, p))
    return reach + 1.0


def shadow_polygon(o: ObstacleRect, t: Target, space: QuerySpace) -> ShadowPolygon:
    """Points from which some sightline to the target touches the obstacle, within the space."""
    hull = shadow_hull(t, o.rect, _reach(t, o.rect, space))
    if hull is None:
        raise ValueError(f"obstacle {o.id} overlaps the target")
    return ShadowPolygon(clip_polygon_to_rect(hull, space.bounds), o.id)


def apply_shadow(tree: QuadTree, w: ShadowPolygon) -> int:
    """Obstruct every visible leaf covered by the shadow; returns leaves changed."""
    if w.empty:
        return 0
    poly = w.poly
    px0, py0 = poly.min(axis=0)
    px1, py1 = poly.max(axis=0)
    x0, y0, x1, y1 = tree.boxes()
    sel = (tree.state == VISIBLE) & (x0 < px1) & (px0 < x1) & (y0 < py1) & (py0 < y1)

    def classify(bx0, by0, bx1, by1):
        return blocks_vs_convex(bx0, by0, bx1, by1, poly)

    def center_in(px, py):
        return points_in_convex(px, py, poly)

    return tree.refine(sel, classify, center_in, OBSTRUCTED, CAUSE_SHADOW, CAUSE_SHADOW_CENTER)


def is_fully_obstructed(tree: QuadTree, r: Rect, exact_only: bool = False) -> bool:
    """True iff every leaf overlapping ``r`` (clipped to the space) is obstructed.

    With ``exact_only`` only leaves obstructed by an exact shadow decision
    count, which makes the test safe for discarding obstacles: a rectangle
    lying in the union of earlier shadows casts a shadow inside that union.
    """
    b = tree.space.bounds
    if exact_only and not (b.xmin <= r.xmin and r.xmax <= b.xmax
                           and b.ymin <= r.ymin and r.ymax <= b.ymax):
        # parts outside the space could shadow areas no leaf speaks for
        return False
    cr = Rect(max(r.xmin, b.xmin), max(r.ymin, b.ymin), min(r.xmax, b.xmax), min(r.ymax, b.ymax))
    if not (cr.xmax > cr.xmin and cr.ymax > cr.ymin):
        return False
    hit = tree.leaves_overlapping(cr)
    if not hit.any():
        return False
    if exact_only:
        return bool((tree.cause[hit] == CAUSE_SHADOW).all())
    return bool((tree.state[hit] == OBSTRUCTED).all())


def _wedge_polys(w: Wedge, space: QuerySpace) -> list[np.ndarray]:
    """The wedge clipped to the space, as convex pieces (halves above 180 degrees)."""
    reach = 2.0 * space.max_distance(w.apex) + 1.0
    halves = [(w.gaze_deg - w.fov_deg / 2, w.gaze_deg + w.fov_deg / 2)]
    if w.fov_deg > 180:
        halves = [(w.gaze_deg - w.fov_deg / 2, w.gaze_deg), (w.gaze_deg, w.gaze_deg + w.fov_deg / 2)]
    polys = []
    for lo, hi in halves:
        angs = np.radians(np.linspace(lo, hi, 9))
        pts = np.concatenate([[w.apex], np.stack([w.apex[0] + reach * np.cos(angs),
                                                  w.apex[1] + reach * np.sin(angs)], axis=1)])
        p = clip_polygon_to_rect(convex_hull(pts), space.bounds)
        if p is not None:
            polys.append(p)
    return polys


def _convex_disjoint(p: np.ndarray, q: np.ndarray) -> bool:
    for poly in (p, q):
        n = len(poly)
        for i in range(n):
            e = poly[(i + 1) % n] - poly[i]
            axis = np.array([-e[1], e[0]])
            if not axis.any():
                continue
            a, b = p @ axis, q @ axis
            tol = EPS * math.hypot(*axis)
            if a.max() < b.min() - tol or b.max() < a.min() - tol:
                return True
    return False


def make_pruner(tree: QuadTree, t: Target, vp: VisionParams):
    """Predicate telling whether an obstacle (or index node) MBR can be skipped.

    A rectangle is skipped when its shadow cannot reach the part of the
    space inside the view wedge, or when it lies in an already
    exactly-obstructed area.
    """
    space = tree.space
    w = vp.wedge(t.midpoint)
    # with a full circle of view nothing lies outside the field of view
    wedge_polys = None if w.full else _wedge_polys(w, space)

    def prune(r: Rect) -> bool:
        if wedge_polys is not None:
            hull = shadow_hull(t, r, _reach(t, r, space))
            if hull is not None and all(_convex_disjoint(hull, wp) for wp in wedge_polys):
                return True
        return is_fully_obstructed(tree, r, exact_only=True)

    return prune


def build_visible_region(space: QuerySpace, t: Target, vp: VisionParams, idx: ObstacleIndex | None,
                         theta: float, stats: AccessStats | None = None,
                         order: str = "distance"):
    """Field-of-view wedge minus the shadows of all relevant obstacles.

    Obstacles come from the index nearest-first; anything farther than the
    perceptibility limit or prunable is skipped. ``order="reverse"`` applies
    the same shadows farthest-first (used to check order independence).
    """
    if stats is None:
        stats = AccessStats()
    tree = init_fov(space, t, vp, theta)
    if idx is None or len(idx) == 0:
        return tree, stats
    prune = make_pruner(tree, t, vp)
    limit = d_max(t.length_S, vp.mu_arcmin)
    stream = incremental_retrieve(idx, t.geom, prune=prune, limit_dist=limit, stats=stats)
    if order == "distance":
        for o, _ in stream:
            apply_shadow(tree, shadow_polygon(o, t, space))
    elif order == "reverse":
        for o in reversed([o for o, _ in stream]):
            apply_shadow(tree, shadow_polygon(o, t, space))
    else:
        raise ValueError(order)
    return tree, stats
