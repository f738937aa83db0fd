"""Brute-force ground truth, the regular-grid baseline, and map-vs-map error."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Sequence, TextIO, Union

import numpy as np

from .builder import VCMap
from .geometry import Point, Rect, points_in_wedge, segments_hit_rects
from .metric import Target, VisionParams, _coincident, colors_at, fully_visible, visibility_color
from .quadtree import QuadTree, QuerySpace


def oracle_color(p: Point, t: Target, vp: VisionParams, obstacles: Sequence[Rect],
                 apply_fov: bool = False) -> float:
    """Color of ``p`` from first principles: 0 if any sightline is blocked.

    With ``apply_fov`` points outside the view wedge are 0 as well, which is
    how the maps treat them.
    """
    if apply_fov and not points_in_wedge(np.array([p[0]]), np.array([p[1]]),
                                         vp.wedge(t.midpoint))[0]:
        return 0.0
    return visibility_color(p, t, vp) if fully_visible(p, t, obstacles) else 0.0


def oracle_colors(px, py, t: Target, vp: VisionParams, obstacles: Sequence[Rect],
                  apply_fov: bool = True) -> np.ndarray:
    px = np.asarray(px, dtype=float)
    py = np.asarray(py, dtype=float)
    rects = [o for o in obstacles if not _coincident(o, t)]
    c = colors_at(px, py, t, vp)
    ok = np.ones(len(px), dtype=bool)
    if apply_fov:
        ok &= points_in_wedge(px, py, vp.wedge(t.midpoint))
    # chunked so memory stays flat for megapixel references
    for s in range(0, len(px), 1 << 18):
        sl = slice(s, s + (1 << 18))
        idx = np.flatnonzero(ok[sl]) + s
        if len(idx) and rects:
            ok[idx] &= ~segments_hit_rects(px[idx], py[idx], t.geom, rects)
    return np.where(ok, c, 0.0)


@dataclass
class BaselineGrid:
    space: QuerySpace
    n_per_dim: int
    colors: np.ndarray  # (n, n), row = y index, column = x index

    def __post_init__(self):
        if self.n_per_dim < 2:
            raise ValueError("grid needs at least 2 cells per side")

    @property
    def cell_side(self) -> float:
        return self.space.side / self.n_per_dim

    def midpoints(self):
        return grid_midpoints(self.space, self.n_per_dim)

    def colors_at(self, px, py) -> np.ndarray:
        b = self.space.bounds
        n = self.n_per_dim
        ix = np.clip(np.floor((np.asarray(px) - b.xmin) / self.cell_side), 0, n - 1).astype(int)
        iy = np.clip(np.floor((np.asarray(py) - b.ymin) / self.cell_side), 0, n - 1).astype(int)
        return self.colors[iy, ix]

    def to_csv(self, fh: TextIO) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["xmin", "ymin", "xmax", "ymax", "color"])
        b, s = self.space.bounds, self.cell_side
        for iy in range(self.n_per_dim):
            for ix in range(self.n_per_dim):
                x0, y0 = b.xmin + ix * s, b.ymin + iy * s
                w.writerow([repr(float(x0)), repr(float(y0)), repr(float(x0 + s)),
                            repr(float(y0 + s)), repr(float(self.colors[iy, ix]))])


def grid_midpoints(space: QuerySpace, n: int):
    b = space.bounds
    s = space.side / n
    c = b.xmin + (np.arange(n) + 0.5) * s
    r = b.ymin + (np.arange(n) + 0.5) * s
    gx, gy = np.meshgrid(c, r)
    return gx.ravel(), gy.ravel()


def baseline_vcm(space: QuerySpace, t: Target, vp: VisionParams, obstacles: Sequence[Rect],
                 n_per_dim: int) -> BaselineGrid:
    """Regular n x n grid, each cell colored by the oracle at its midpoint."""
    if n_per_dim < 2:
        raise ValueError("grid needs at least 2 cells per side")
    px, py = grid_midpoints(space, n_per_dim)
    c = oracle_colors(px, py, t, vp, obstacles, apply_fov=True)
    return BaselineGrid(space, n_per_dim, c.reshape(n_per_dim, n_per_dim))


@dataclass
class OracleReference:
    """Ground truth sampled once per cell of a fine n x n raster.

    Samples sit at the cell midpoints, or, given a ``seed``, at a uniformly
    jittered position inside each cell (stratified sampling).
    """
    space: QuerySpace
    n_per_dim: int
    px: np.ndarray
    py: np.ndarray
    colors: np.ndarray

    @classmethod
    def build(cls, space: QuerySpace, t: Target, vp: VisionParams, obstacles: Sequence[Rect],
              n_per_dim: int = 1024, seed: int | None = None) -> "OracleReference":
        px, py = grid_midpoints(space, n_per_dim)
        if seed is not None:
            h = space.side / n_per_dim
            rng = np.random.default_rng(seed)
            px = px + rng.uniform(-h / 2, h / 2, len(px))
            py = py + rng.uniform(-h / 2, h / 2, len(py))
        return cls(space, n_per_dim, px, py, oracle_colors(px, py, t, vp, obstacles))


@dataclass
class ErrorReport:
    error_fraction: float
    abs_deviation: float     # sum of |c_e - c_a| * A (or the signed sum in signed mode)
    reference_mass: float    # sum of c_e * A
    pieces: int
    mode: str

    def __post_init__(self):
        if self.mode == "area_weighted_abs" and self.error_fraction < 0:
            raise ValueError("negative absolute error")


MapLike = Union[VCMap, BaselineGrid, OracleReference]
MODES = ("area_weighted_signed", "area_weighted_abs")


def _as_rects(m) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    if isinstance(m, VCMap):
        x0, y0, x1, y1 = m.tree.boxes()
        return x0, y0, x1, y1, m.tree.color
    b, s, n = m.space.bounds, m.cell_side, m.n_per_dim
    ix, iy = np.meshgrid(np.arange(n), np.arange(n))
    x0 = b.xmin + ix.ravel() * s
    y0 = b.ymin + iy.ravel() * s
    return x0, y0, x0 + s, y0 + s, m.colors.ravel()


def _overlay_trees(a: QuadTree, b: QuadTree):
    """Pieces of the common refinement of two quadtrees: (area, color_a, color_b)."""
    F = max(a.floor, b.floor)

    def ranges(q: QuadTree):
        q.sort()
        shift = 2 * (F - q.floor)
        start = q.morton_keys() << shift
        return start

    sa, sb = ranges(a), ranges(b)
    total = 1 << (2 * F)
    cuts = np.union1d(sa, sb)
    ends = np.r_[cuts[1:], total]
    ia = np.searchsorted(sa, cuts, side="right") - 1
    ib = np.searchsorted(sb, cuts, side="right") - 1
    cell = (a.space.side / (1 << F)) ** 2
    return (ends - cuts).astype(float) * cell, a.color[ia], b.color[ib]


def _overlay_rects_grid(rects, grid_bounds: Rect, n: int, grid_colors: np.ndarray):
    x0, y0, x1, y1, col = rects
    s = (grid_bounds.xmax - grid_bounds.xmin) / n
    i0 = np.clip(np.floor((x0 - grid_bounds.xmin) / s + 1e-9), 0, n - 1).astype(np.int64)
    i1 = np.clip(np.ceil((x1 - grid_bounds.xmin) / s - 1e-9), 1, n).astype(np.int64)
    j0 = np.clip(np.floor((y0 - grid_bounds.ymin) / s + 1e-9), 0, n - 1).astype(np.int64)
    j1 = np.clip(np.ceil((y1 - grid_bounds.ymin) / s - 1e-9), 1, n).astype(np.int64)
    nx, ny = i1 - i0, j1 - j0
    cnt = nx * ny
    rid = np.repeat(np.arange(len(x0)), cnt)
    k = np.arange(cnt.sum()) - np.repeat(np.cumsum(cnt) - cnt, cnt)
    gi = i0[rid] + k % nx[rid]
    gj = j0[rid] + k // nx[rid]
    gx0 = grid_bounds.xmin + gi * s
    gy0 = grid_bounds.ymin + gj * s
    w = np.minimum(x1[rid], gx0 + s) - np.maximum(x0[rid], gx0)
    h = np.minimum(y1[rid], gy0 + s) - np.maximum(y0[rid], gy0)
    area = np.clip(w, 0, None) * np.clip(h, 0, None)
    return area, col[rid], grid_colors[gj, gi]


def overlay(reference: MapLike, candidate: MapLike):
    """(area, reference color, candidate color) over the common refinement."""
    if isinstance(reference, OracleReference):
        cell = (reference.space.side / reference.n_per_dim) ** 2
        cand = candidate.colors_at(reference.px, reference.py) \
            if not isinstance(candidate, OracleReference) else candidate.colors
        return np.full(len(reference.px), cell), reference.colors, cand
    if isinstance(candidate, OracleReference):
        area, c, r = overlay(candidate, reference)
        return area, r, c
    if isinstance(reference, VCMap) and isinstance(candidate, VCMap):
        return _overlay_trees(reference.tree, candidate.tree)
    if isinstance(candidate, BaselineGrid):
        return _overlay_rects_grid(_as_rects(reference), candidate.space.bounds,
                                   candidate.n_per_dim, candidate.colors)
    area, c, r = _overlay_rects_grid(_as_rects(candidate), reference.space.bounds,
                                     reference.n_per_dim, reference.colors)
    return area, r, c


def measured_error(reference: MapLike, candidate: MapLike,
                   mode: str = "area_weighted_abs") -> ErrorReport:
    """Relative color*area deviation of ``candidate`` from ``reference``.

    Signed mode is sum(c_e*A - c_a*A) / sum(c_e*A); abs mode replaces the
    numerator with sum(|c_e - c_a|*A). Areas come from the overlay of the two
    maps; an oracle reference is a fine raster evaluated at pixel centers.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    area, ce, ca = overlay(reference, candidate)
    mass = float(np.sum(ce * area))
    if mass <= 0:
        raise ValueError("reference map is all zero")
    if mode == "area_weighted_signed":
        num = float(np.sum((ce - ca) * area))
    else:
        num = float(np.sum(np.abs(ce - ca) * area))
    return ErrorReport(num / mass, num, mass, len(area), mode)
