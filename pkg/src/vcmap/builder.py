"""Color tree, the block/cell join that colors the visible region, and the
viewer-centric and incremental-gaze entry points."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .geometry import EPS, Point, Rect, block_polar_extent, classify_blocks_wedge, points_in_wedge
from .metric import Target, VisionParams, d_max
from .partition import CellSet, build_cells
from .quadtree import (CAUSE_FOV, CAUSE_NONE, COLORED, OBSTRUCTED, VISIBLE, QuadTree,
                       QuerySpace)
from .region import build_visible_region
from .rtree import AccessStats, ObstacleIndex, RTree

VARIANTS = ("exact", "mbr", "tangent")


# --------------------------------------------------------------------------
# cell shapes in world coordinates


def _sector_local_points(d_lo, d_hi, phi_lo, phi_hi):
    """Target-frame points whose bounding box is each sector's MBR: (n, k, 2)."""
    angs = [phi_lo, phi_hi]
    radii = [d_lo, d_hi, d_lo, d_hi]
    ang4 = [phi_lo, phi_lo, phi_hi, phi_hi]
    pts = [np.stack([r * np.cos(np.radians(a)), r * np.sin(np.radians(a))], axis=-1)
           for r, a in zip(radii, ang4)]
    for axis in (0.0, 90.0, 180.0, 270.0, 360.0):
        inside = (phi_lo <= axis) & (axis <= phi_hi)
        # fall back to an existing corner when the axis direction is not spanned
        a = np.where(inside, axis, angs[0])
        r = np.where(inside, d_hi, d_lo)
        pts.append(np.stack([r * np.cos(np.radians(a)), r * np.sin(np.radians(a))], axis=-1))
    return np.stack(pts, axis=1)


def _local_to_world(t: Target, pts: np.ndarray) -> np.ndarray:
    wx, wy = t.to_world(pts[..., 0], pts[..., 1])
    return np.stack([wx, wy], axis=-1)


def cell_quads(cs: CellSet, variant: str) -> np.ndarray:
    """World-frame quadrilaterals (n, 4, 2), counterclockwise, for the approximations."""
    lo, hi = cs.phi
    if variant == "mbr":
        p = _sector_local_points(cs.d_lo, cs.d_hi, lo, hi)
        x0, y0 = p[..., 0].min(axis=1), p[..., 1].min(axis=1)
        x1, y1 = p[..., 0].max(axis=1), p[..., 1].max(axis=1)
        local = np.stack([np.stack([x0, y0], -1), np.stack([x1, y0], -1),
                          np.stack([x1, y1], -1), np.stack([x0, y1], -1)], axis=1)
    elif variant == "tangent":
        k = 1.0 / np.cos(np.radians(hi - lo) / 2)
        verts = []
        for r, a in ((cs.d_lo * k, lo), (cs.d_hi * k, lo), (cs.d_hi * k, hi), (cs.d_lo * k, hi)):
            verts.append(np.stack([r * np.cos(np.radians(a)), r * np.sin(np.radians(a))], -1))
        local = np.stack(verts, axis=1)
    else:
        raise ValueError(variant)
    return _local_to_world(cs.target, local)


@dataclass
class ColorTree:
    cells: CellSet
    variant: str
    index: RTree
    quads: np.ndarray | None  # approximations only

    @property
    def target(self) -> Target:
        return self.cells.target

    @property
    def params(self) -> VisionParams:
        return self.cells.params

    def range_query(self, r: Rect, stats: AccessStats | None = None) -> np.ndarray:
        """Cell indices whose stored geometry meets the probe rectangle, ascending."""
        qi, ci = self.index.range_query_many(np.array([tuple(r)]), stats)
        b = np.array([tuple(r)] * len(ci)).reshape(-1, 4)
        cls = self.classify_pairs(b[:, 0], b[:, 1], b[:, 2], b[:, 3], ci)
        return np.sort(ci[cls > 0])

    def classify_pairs(self, x0, y0, x1, y1, ci) -> np.ndarray:
        """0 disjoint, 1 block inside the cell shape, 2 partial; one row per pair."""
        if self.variant == "exact":
            return _blocks_vs_sectors(x0, y0, x1, y1, self.cells, ci)
        return _boxes_vs_quads(x0, y0, x1, y1, self.quads[ci])

    def contains_points(self, px, py, ci) -> np.ndarray:
        if self.variant == "exact":
            t = self.target
            lx, ly = t.to_local(px, py)
            D = np.hypot(lx, ly)
            phi = np.degrees(np.arctan2(ly, lx)) % 360.0
            lo, hi = self.cells.phi
            return ((self.cells.d_lo[ci] <= D) & (D < self.cells.d_hi[ci])
                    & (lo[ci] <= phi) & (phi <= hi[ci]))
        q = self.quads[ci]
        inside = np.ones(len(ci), dtype=bool)
        for i in range(4):
            a = q[:, i]
            e = q[:, (i + 1) % 4] - a
            inside &= e[:, 0] * (py - a[:, 1]) - e[:, 1] * (px - a[:, 0]) >= -EPS
        return inside


def build_color_tree(cs: CellSet, variant: str = "exact", page_size: int = 1024) -> ColorTree:
    if len(cs) == 0:
        raise ValueError("empty cell set")
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    quads = None
    if variant == "exact":
        lo, hi = cs.phi
        pts = _local_to_world(cs.target, _sector_local_points(cs.d_lo, cs.d_hi, lo, hi))
    else:
        quads = cell_quads(cs, variant)
        pts = quads
    boxes = np.stack([pts[..., 0].min(axis=1), pts[..., 1].min(axis=1),
                      pts[..., 0].max(axis=1), pts[..., 1].max(axis=1)], axis=1)
    return ColorTree(cs, variant, RTree(boxes, np.arange(len(cs)), page_size), quads)


def _blocks_vs_sectors(x0, y0, x1, y1, cs: CellSet, ci) -> np.ndarray:
    t = cs.target
    dmin, dmax, mid, blo, bhi, apex = block_polar_extent(x0, y0, x1, y1, t.midpoint.x, t.midpoint.y)
    c = (mid - t.direction_deg) % 360.0
    a0, a1 = c + blo, c + bhi
    lo, hi = cs.phi
    slo, shi = lo[ci], hi[ci]
    d_lo, d_hi = cs.d_lo[ci], cs.d_hi[ci]
    radial_overlap = (dmax > d_lo + EPS) & (dmin < d_hi - EPS)
    ang_overlap = np.zeros(len(ci), dtype=bool)
    ang_inside = np.zeros(len(ci), dtype=bool)
    for k in (-360.0, 0.0, 360.0):
        ang_overlap |= (a0 + k < shi - 1e-12) & (a1 + k > slo + 1e-12)
        ang_inside |= (a0 + k >= slo - 1e-12) & (a1 + k <= shi + 1e-12)
    ang_overlap |= apex
    out = np.full(len(ci), 2, dtype=np.int8)
    inside = (dmin >= d_lo - EPS) & (dmax <= d_hi + EPS) & ang_inside & ~apex
    out[inside] = 1
    out[~(radial_overlap & ang_overlap)] = 0
    return out


def _boxes_vs_quads(x0, y0, x1, y1, quads: np.ndarray) -> np.ndarray:
    qx, qy = quads[..., 0], quads[..., 1]
    sep = (x1 <= qx.min(axis=1) + EPS) | (x0 >= qx.max(axis=1) - EPS)
    sep |= (y1 <= qy.min(axis=1) + EPS) | (y0 >= qy.max(axis=1) - EPS)
    cx = np.stack([x0, x1, x1, x0], axis=1)
    cy = np.stack([y0, y0, y1, y1], axis=1)
    all_in = np.ones(len(x0), dtype=bool)
    for i in range(4):
        ax, ay = qx[:, i], qy[:, i]
        ex, ey = qx[:, (i + 1) % 4] - ax, qy[:, (i + 1) % 4] - ay
        L = np.hypot(ex, ey)
        degenerate = L == 0
        L = np.where(degenerate, 1.0, L)
        side = (ex[:, None] * (cy - ay[:, None]) - ey[:, None] * (cx - ax[:, None])) / L[:, None]
        # a collapsed edge (sector apex at the origin) constrains nothing
        side[degenerate] = np.inf
        all_in &= (side >= -EPS).all(axis=1)
        sep |= (side <= EPS).all(axis=1)
    out = np.full(len(x0), 2, dtype=np.int8)
    out[all_in] = 1
    out[sep] = 0
    return out


# --------------------------------------------------------------------------
# the map


@dataclass
class VCMap:
    tree: QuadTree
    target: Target
    params: VisionParams
    variant: str
    stats: dict = field(default_factory=dict)

    def colors_at(self, px, py) -> np.ndarray:
        return self.tree.color[self.tree.state_at(px, py)]

    def to_csv(self, fh) -> None:
        self.tree.to_csv(fh, with_color=True)

    def stats_lines(self) -> list[str]:
        keys = ("node_accesses_obstacle", "node_accesses_color", "leaves_colored",
                "leaves_obstructed", "elapsed_partition_s", "elapsed_region_s", "elapsed_merge_s")
        return [f"{k}={self.stats.get(k, 0)}" for k in keys]


def _first_per_group(groups: np.ndarray, mask: np.ndarray, n: int, values: np.ndarray) -> np.ndarray:
    """Per group, the smallest ``values`` entry where ``mask`` holds (-1 if none)."""
    out = np.full(n, np.iinfo(np.int64).max, dtype=np.int64)
    np.minimum.at(out, groups[mask], values[mask])
    out[out == np.iinfo(np.int64).max] = -1
    return out


def construct_vcm(tree: QuadTree, ct: ColorTree, t: Target, vp: VisionParams,
                  stats: AccessStats | None = None) -> int:
    """Color every visible leaf in place; returns color-tree node accesses.

    A block takes the color of the first cell (inside-out order) whose shape
    meets it when that shape contains the whole block. Otherwise it is split
    into four, down to the floor level, where the first cell whose shape
    contains the block center wins (for approximate shapes, the first shape
    meeting the block if none contains the center). Blocks meeting no cell
    get color 0.
    Obstructed leaves keep color 0.
    """
    if ct.target != t or ct.params.mu_arcmin != vp.mu_arcmin or ct.params.d0 != vp.d0 \
            or ct.params.inside_nearpoint != vp.inside_nearpoint:
        raise ValueError("color tree was built for a different target or parameters")
    if stats is None:
        stats = AccessStats()
    before = stats.node_accesses
    tree.color[tree.state == OBSTRUCTED] = 0.0
    sel = np.flatnonzero(tree.state == VISIBLE)
    if len(sel) == 0:
        return 0
    keep = np.ones(len(tree), dtype=bool)
    keep[sel] = False
    lev, ix, iy = tree.level[sel], tree.ix[sel], tree.iy[sel]
    x0, y0, x1, y1 = tree.boxes(sel)
    bi, ci = ct.index.range_query_many(np.stack([x0, y0, x1, y1], axis=1), stats)
    color_of = ct.cells.color
    out_lev, out_ix, out_iy, out_col = [], [], [], []
    while len(lev):
        n = len(lev)
        s = tree.side_of(lev)
        x0 = tree.space.bounds.xmin + ix * s
        y0 = tree.space.bounds.ymin + iy * s
        cls = ct.classify_pairs(x0[bi], y0[bi], x0[bi] + s[bi], y0[bi] + s[bi], ci) \
            if len(bi) else np.zeros(0, dtype=np.int8)
        hit = cls > 0
        bi, ci, cls = bi[hit], ci[hit], cls[hit]
        first = _first_per_group(bi, np.ones(len(bi), dtype=bool), n, ci)
        # class of the pair (block, first cell)
        first_cls = np.zeros(n, dtype=np.int8)
        is_first = ci == first[bi]
        first_cls[bi[is_first]] = cls[is_first]
        col = np.zeros(n)
        done = (first < 0) | (first_cls == 1)
        col[first_cls == 1] = color_of[first[first_cls == 1]]
        floor = ~done & (lev >= tree.floor)
        if floor.any():
            fb = floor[bi]
            pcx = x0[bi[fb]] + s[bi[fb]] / 2
            pcy = y0[bi[fb]] + s[bi[fb]] / 2
            inside = ct.contains_points(pcx, pcy, ci[fb])
            m = np.zeros(len(bi), dtype=bool)
            m[np.flatnonzero(fb)[inside]] = True
            cf = _first_per_group(bi, m, n, ci)
            if ct.variant != "exact":
                # approximate shapes can leave slivers between rings; there the
                # first shape meeting the block stands in
                cf = np.where(cf >= 0, cf, first)
            got = floor & (cf >= 0)
            col[got] = color_of[cf[got]]
            done |= floor
        out_lev.append(lev[done])
        out_ix.append(ix[done])
        out_iy.append(iy[done])
        out_col.append(col[done])
        split = ~done
        # children inherit the parent's candidate cells
        new_id = np.full(n, -1, dtype=np.int64)
        new_id[split] = np.arange(int(split.sum()))
        pm = split[bi]
        pb, pc = new_id[bi[pm]], ci[pm]
        bi = (np.repeat(pb * 4, 4) + np.tile(np.arange(4), len(pb)))
        ci = np.repeat(pc, 4)
        lev, ix, iy = lev[split], ix[split], iy[split]
        lev4 = np.repeat(lev + 1, 4).astype(np.int8)
        ix4 = np.repeat(ix * 2, 4) + np.tile([0, 1, 0, 1], len(ix))
        iy4 = np.repeat(iy * 2, 4) + np.tile([0, 0, 1, 1], len(iy))
        lev, ix, iy = lev4, ix4, iy4
        if len(bi):
            order = np.argsort(bi, kind="stable")
            bi, ci = bi[order], ci[order]
    nl = np.concatenate(out_lev)
    m = len(nl)
    tree.level = np.concatenate([tree.level[keep], nl]).astype(np.int8)
    tree.ix = np.concatenate([tree.ix[keep], np.concatenate(out_ix)])
    tree.iy = np.concatenate([tree.iy[keep], np.concatenate(out_iy)])
    tree.state = np.concatenate([tree.state[keep], np.full(m, COLORED, dtype=np.int8)])
    tree.cause = np.concatenate([tree.cause[keep], np.full(m, CAUSE_NONE, dtype=np.int8)])
    tree.color = np.concatenate([tree.color[keep], np.concatenate(out_col)])
    tree.sort()
    return stats.node_accesses - before


def _fill_stats(vcm: VCMap, obstacle_stats: AccessStats, color_accesses: int, timings) -> None:
    tree = vcm.tree
    vcm.stats.update(
        node_accesses_obstacle=obstacle_stats.node_accesses,
        node_accesses_color=color_accesses,
        leaves_colored=int((tree.state == COLORED).sum()),
        leaves_obstructed=int((tree.state == OBSTRUCTED).sum()),
        obstacles_emitted=obstacle_stats.obstacles_emitted,
        obstacles_pruned=obstacle_stats.obstacles_pruned,
        theta=tree.theta,
        elapsed_partition_s=round(timings[0], 6),
        elapsed_region_s=round(timings[1], 6),
        elapsed_merge_s=round(timings[2], 6),
    )


def build_vcm(space: QuerySpace, t: Target, vp: VisionParams, idx: ObstacleIndex | None,
              variant: str = "exact", theta_multiplier: float = 1.0,
              cells: CellSet | None = None) -> VCMap:
    """The full pipeline: cells and threshold, visible region, coloring join."""
    t0 = time.perf_counter()
    cs = cells if cells is not None else build_cells(t, vp, max_radius=space.max_distance(t.midpoint))
    theta = cs.theta * theta_multiplier
    ct = build_color_tree(cs, variant)
    t1 = time.perf_counter()
    tree, ostats = build_visible_region(space, t, vp, idx, theta)
    t2 = time.perf_counter()
    acc = construct_vcm(tree, ct, t, vp)
    t3 = time.perf_counter()
    vcm = VCMap(tree, t, vp, variant)
    _fill_stats(vcm, ostats, acc, (t1 - t0, t2 - t1, t3 - t2))
    return vcm


# --------------------------------------------------------------------------
# viewer-centric maps


@dataclass(frozen=True)
class ViewerQuery:
    q: Point
    derived_target: Target
    d_max: float


def viewer_centric_setup(q: Point, vp: VisionParams, d_max_in: float,
                         orientation: str = "perpendicular") -> ViewerQuery:
    """Stand-in target at the viewer, just perceptible at ``d_max_in``.

    The segment is centered on ``q`` and, by default, laid perpendicular to
    the gaze; ``orientation="along"`` lays it along the gaze instead.
    """
    if d_max_in <= 0:
        raise ValueError("d_max must be positive")
    S = 2.0 * d_max_in * math.tan(vp.mu_rad / 2.0)
    if orientation == "perpendicular":
        direction = vp.gaze_deg + 90.0
    elif orientation == "along":
        direction = vp.gaze_deg
    else:
        raise ValueError(orientation)
    return ViewerQuery(Point(*q), Target.centered(Point(*q), S, direction), d_max_in)


# --------------------------------------------------------------------------
# incremental gaze changes


@dataclass
class Precomputed:
    tree: QuadTree           # fully colored with a 360 degree field of view
    color_tree: ColorTree
    space: QuerySpace
    target: Target
    params: VisionParams
    stats: dict


def precompute_360(space: QuerySpace, t: Target, vp: VisionParams, idx: ObstacleIndex | None,
                   variant: str = "exact", theta_multiplier: float = 1.0) -> Precomputed:
    full = VisionParams(vp.mu_arcmin, vp.d0, 360.0, vp.gaze_deg, vp.inside_nearpoint)
    cs = build_cells(t, full, max_radius=space.max_distance(t.midpoint))
    vcm = build_vcm(space, t, full, idx, variant, theta_multiplier, cells=cs)
    return Precomputed(vcm.tree, build_color_tree(cs, variant), space, t, full, vcm.stats)


def incremental_update(pre: Precomputed, gaze_deg: float, fov_deg: float) -> VCMap:
    """Map for a new gaze direction, read off the precomputed full-circle map.

    Leaves outside the new wedge are masked to obstructed/0; leaves cut by
    the wedge boundary are split to the floor level and decided by their
    centers, exactly as a from-scratch run initializes its field of view.
    The precomputed tree itself is left untouched.
    """
    t0 = time.perf_counter()
    vp = VisionParams(pre.params.mu_arcmin, pre.params.d0, fov_deg, gaze_deg,
                      pre.params.inside_nearpoint)
    tree = pre.tree.copy()
    w = vp.wedge(pre.target.midpoint)
    if not w.full:
        def outside(x0, y0, x1, y1):
            c = classify_blocks_wedge(x0, y0, x1, y1, w)
            return np.choose(c, [1, 0, 2]).astype(np.int8)

        def center_out(px, py):
            return ~points_in_wedge(px, py, w)

        tree.refine(np.ones(len(tree), dtype=bool), outside, center_out, OBSTRUCTED,
                    CAUSE_FOV, CAUSE_FOV)
        tree.color[tree.state == OBSTRUCTED] = 0.0
        tree.sort()
    vcm = VCMap(tree, pre.target, vp, pre.color_tree.variant)
    vcm.stats.update(
        node_accesses_obstacle=0, node_accesses_color=0,
        leaves_colored=int((tree.state == COLORED).sum()),
        leaves_obstructed=int((tree.state == OBSTRUCTED).sum()),
        elapsed_partition_s=0.0, elapsed_region_s=0.0,
        elapsed_merge_s=round(time.perf_counter() - t0, 6),
    )
    return vcm
