"""Equi-visible cells: distance rings, angle partitions, colors, block threshold.

Cells live in the target frame (origin at the target midpoint, x along the
target). Only the first quadrant is partitioned; the other three are its
reflections. All per-cell data is kept column-wise in numpy arrays because a
realistic configuration produces 10^5 to 10^7 cells.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import TextIO

import numpy as np

from .geometry import Rect
from .metric import Target, VisionParams, color_from_polar, d_max, norm_angle, visual_angle


@dataclass(frozen=True)
class DistancePartitionSet:
    radii: np.ndarray

    def __len__(self):
        return len(self.radii)


def build_distance_partitions(t: Target, vp: VisionParams) -> DistancePartitionSet:
    S, mu = t.length_S, vp.mu_deg
    V0 = visual_angle(S, vp.d0)
    if V0 <= mu:
        raise ValueError("target is imperceptible beyond the near point; no partitions")
    m = int(math.floor((V0 - mu) / mu + 1e-9)) + 1
    V = V0 - mu * np.arange(m)
    radii = S / (2.0 * np.tan(np.radians(V) / 2.0))
    radii[0] = vp.d0
    return DistancePartitionSet(radii)


def build_angle_partitions(d_lo: float, d_hi: float, t: Target, vp: VisionParams) -> np.ndarray:
    """Boundary viewing angles for one ring, from 90 down to 0 degrees.

    Boundaries are placed where the visual angle measured at the ring's mean
    distance has dropped by successive multiples of the angular resolution.
    The first entry is always 90 and the last always 0; the entries between
    are the interior boundaries (none when the ring's visual angle is below
    twice the resolution).
    """
    if not d_lo < d_hi:
        raise ValueError("d_lo must be below d_hi")
    S, mu = t.length_S, vp.mu_deg
    d_mid = (d_lo + d_hi) / 2.0
    V0 = visual_angle(S, d_mid)
    J = int(math.floor(V0 / mu - 1.0 + 1e-9))
    if J < 1:
        return np.array([90.0, 0.0])
    Vj = V0 - mu * np.arange(1, J + 1)
    Sj = 2.0 * d_mid * np.tan(np.radians(Vj) / 2.0)
    alpha = Sj * 90.0 / S
    return np.concatenate([[90.0], alpha, [0.0]])


QUADRANT_SIGNS = {1: (1, 1), 2: (-1, 1), 3: (-1, -1), 4: (1, -1)}


def polar_range(quadrant, g_lo, g_hi):
    """Polar-angle interval (degrees, target frame) of a cell in a given quadrant."""
    q = np.asarray(quadrant)
    g_lo = np.asarray(g_lo, dtype=float)
    g_hi = np.asarray(g_hi, dtype=float)
    lo = np.select([q == 1, q == 2, q == 3, q == 4],
                   [g_lo, 180.0 - g_hi, 180.0 + g_lo, 360.0 - g_hi])
    hi = np.select([q == 1, q == 2, q == 3, q == 4],
                   [g_hi, 180.0 - g_lo, 180.0 + g_hi, 360.0 - g_lo])
    return lo, hi


@dataclass
class Cell:
    d_lo: float
    d_hi: float
    gamma_lo: float
    gamma_hi: float
    quadrant: int
    color: float

    @property
    def phi_range(self) -> tuple[float, float]:
        lo, hi = polar_range(self.quadrant, self.gamma_lo, self.gamma_hi)
        return float(lo), float(hi)

    @property
    def area(self) -> float:
        return math.radians(self.gamma_hi - self.gamma_lo) / 2 * (self.d_hi ** 2 - self.d_lo ** 2)


@dataclass
class CellSet:
    """All cells of a target, columnar.

    ``ring`` is -1 for the near-point disk (cells inside ``d0`` reuse the first
    ring's angle partitions); those are kept so the map has no hole around the
    target but do not take part in the threshold or error-bound computations.
    Rows are ordered ring-major, inside out, then by quadrant, then from 90
    degrees down.
    """

    target: Target
    params: VisionParams
    radii: np.ndarray
    ring: np.ndarray
    quadrant: np.ndarray
    d_lo: np.ndarray
    d_hi: np.ndarray
    g_lo: np.ndarray
    g_hi: np.ndarray
    color: np.ndarray
    theta: float = field(default=0.0)

    def __len__(self):
        return len(self.ring)

    @property
    def main(self) -> np.ndarray:
        return self.ring >= 0

    @cached_property
    def phi(self) -> tuple[np.ndarray, np.ndarray]:
        return polar_range(self.quadrant, self.g_lo, self.g_hi)

    @property
    def area(self) -> np.ndarray:
        return np.radians(self.g_hi - self.g_lo) / 2 * (self.d_hi ** 2 - self.d_lo ** 2)

    def cell(self, i: int) -> Cell:
        return Cell(float(self.d_lo[i]), float(self.d_hi[i]), float(self.g_lo[i]),
                    float(self.g_hi[i]), int(self.quadrant[i]), float(self.color[i]))

    def to_csv(self, fh: TextIO) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["quadrant", "d_lo", "d_hi", "gamma_lo", "gamma_hi", "color"])
        for i in np.flatnonzero(self.main):
            w.writerow([int(self.quadrant[i]), repr(float(self.d_lo[i])), repr(float(self.d_hi[i])),
                        repr(float(self.g_lo[i])), repr(float(self.g_hi[i])),
                        repr(float(self.color[i]))])


def ring_radii(t: Target, vp: VisionParams) -> np.ndarray:
    """Distance boundaries closed off at the perceptibility limit.

    The last partition radius still sees the target at an angle of at least
    the resolution, so one closing ring out to ``d_max`` is appended to cover
    the whole perceptible annulus.
    """
    radii = build_distance_partitions(t, vp).radii
    far = d_max(t.length_S, vp.mu_arcmin)
    if far > radii[-1] * (1 + 1e-12):
        radii = np.append(radii, far)
    return radii


def first_quadrant_rings(t: Target, vp: VisionParams, max_radius: float | None = None):
    """Yield (ring index, d_lo, d_hi, boundaries) for every ring, inside out."""
    radii = ring_radii(t, vp)
    for i in range(len(radii) - 1):
        if max_radius is not None and radii[i] >= max_radius:
            break
        yield i, radii[i], radii[i + 1], build_angle_partitions(radii[i], radii[i + 1], t, vp)


def build_cells(t: Target, vp: VisionParams, max_radius: float | None = None,
                near_cells: bool = True) -> CellSet:
    """Partition the plane around the target into equi-visible cells.

    ``max_radius`` drops rings that start beyond it; the map construction
    passes the farthest query-space distance so cells nobody can probe are
    never materialized.
    """
    radii = ring_radii(t, vp)
    cols: dict[str, list] = {k: [] for k in ("ring", "d_lo", "d_hi", "g_lo", "g_hi")}
    first_bounds = None
    for i, lo, hi, b in first_quadrant_rings(t, vp, max_radius):
        if first_bounds is None:
            first_bounds = b
        k = len(b) - 1
        cols["ring"].append(np.full(k, i))
        cols["d_lo"].append(np.full(k, lo))
        cols["d_hi"].append(np.full(k, hi))
        cols["g_lo"].append(b[1:])
        cols["g_hi"].append(b[:-1])
    if first_bounds is None:
        first_bounds = np.array([90.0, 0.0])
    if near_cells:
        k = len(first_bounds) - 1
        cols["ring"].insert(0, np.full(k, -1))
        cols["d_lo"].insert(0, np.zeros(k))
        cols["d_hi"].insert(0, np.full(k, vp.d0))
        cols["g_lo"].insert(0, first_bounds[1:])
        cols["g_hi"].insert(0, first_bounds[:-1])
    q1 = {k: np.concatenate(v) if v else np.zeros(0) for k, v in cols.items()}
    q1["ring"] = q1["ring"].astype(np.int64)

    d_mid = (q1["d_lo"] + q1["d_hi"]) / 2
    g_mid = (q1["g_lo"] + q1["g_hi"]) / 2
    color = color_from_polar(d_mid, g_mid, t, vp)
    near = q1["ring"] < 0
    if near.any():
        # inside the near point the center sits at d0/2, which the model clamps
        color[near] = color_from_polar(np.full(near.sum(), vp.d0 / 2), g_mid[near], t, vp)

    # expand to four quadrants, keeping ring-major order
    n1 = len(q1["ring"])
    order_ring = np.repeat(q1["ring"], 4).reshape(n1, 4)
    quad = np.tile(np.arange(1, 5), (n1, 1))
    idx = np.repeat(np.arange(n1), 4).reshape(n1, 4)
    # stable sort by (ring, quadrant, position within ring)
    perm = np.lexsort((idx.ravel(), quad.ravel(), order_ring.ravel()))
    src = idx.ravel()[perm]
    cs = CellSet(
        target=t, params=vp, radii=radii,
        ring=q1["ring"][src], quadrant=quad.ravel()[perm].astype(np.int8),
        d_lo=q1["d_lo"][src], d_hi=q1["d_hi"][src],
        g_lo=q1["g_lo"][src], g_hi=q1["g_hi"][src], color=color[src],
    )
    if cs.main.any():
        cs.theta = compute_theta(cs)
    return cs


def compute_theta(cs: CellSet) -> float:
    """Smallest distance between opposite boundaries over all cells."""
    m = cs.main
    if not m.any():
        raise ValueError("empty cell set")
    radial = cs.d_hi[m] - cs.d_lo[m]
    arc = cs.d_lo[m] * np.radians(cs.g_hi[m] - cs.g_lo[m])
    return float(np.minimum(radial, arc).min())


def locate_first_quadrant(D, alpha_deg, t: Target, vp: VisionParams):
    """Closed-form (ring, angle-partition) indices for target-frame polar points.

    Returns -1 rings for points inside the near point or beyond the last ring.
    """
    radii = ring_radii(t, vp)
    D = np.asarray(D, dtype=float)
    alpha = np.asarray(alpha_deg, dtype=float)
    ring = np.searchsorted(radii, D, side="right") - 1
    ring = np.where((D < radii[0]) | (ring >= len(radii) - 1), -1, ring)
    j = np.full(D.shape, -1)
    ok = ring >= 0
    if ok.any():
        d_lo = radii[ring[ok]]
        d_hi = radii[ring[ok] + 1]
        d_mid = (d_lo + d_hi) / 2
        V0 = visual_angle(t.length_S, d_mid)
        J = np.floor(V0 / vp.mu_deg - 1.0 + 1e-9)
        S_a = alpha[ok] / 90.0 * t.length_S
        Va = np.degrees(2 * np.arctan(S_a / (2 * d_mid)))
        jj = np.floor((V0 - Va) / vp.mu_deg)
        j[ok] = np.clip(jj, 0, np.maximum(J, 0)).astype(int)
    return ring, j


# --------------------------------------------------------------------------
# approximations


def sector_mbr(d_lo: float, d_hi: float, phi_lo: float, phi_hi: float) -> Rect:
    """Axis-aligned bounding box of an annular sector (polar angles in degrees)."""
    angles = [phi_lo, phi_hi]
    k = math.ceil(phi_lo / 90.0)
    while k * 90.0 <= phi_hi:
        angles.append(k * 90.0)
        k += 1
    xs, ys = [], []
    for a in angles:
        c, s = math.cos(math.radians(a)), math.sin(math.radians(a))
        for r in (d_lo, d_hi):
            xs.append(r * c)
            ys.append(r * s)
    return Rect(min(xs), min(ys), max(xs), max(ys))


def approximate_cell_mbr(c: Cell, t: Target) -> Rect:
    """Target-frame MBR of a cell."""
    return sector_mbr(c.d_lo, c.d_hi, *c.phi_range)


def sector_trapezoid(d_lo: float, d_hi: float, phi_lo: float, phi_hi: float) -> np.ndarray:
    """Trapezoid cut by the tangents at both arc midpoints and the two radial edges."""
    half = math.radians(phi_hi - phi_lo) / 2
    k = 1.0 / math.cos(half)
    pts = []
    for r, a in ((d_lo * k, phi_lo), (d_hi * k, phi_lo), (d_hi * k, phi_hi), (d_lo * k, phi_hi)):
        pts.append((r * math.cos(math.radians(a)), r * math.sin(math.radians(a))))
    return np.array(pts)


def approximate_cell_tangential(c: Cell, t: Target) -> np.ndarray:
    """Target-frame trapezoid (counterclockwise) approximating a cell."""
    return sector_trapezoid(c.d_lo, c.d_hi, *c.phi_range)


def wrong_ring_count(r_i: float, r_next: float, kind: str) -> int:
    """How many rings beyond a cell its approximation can spill into."""
    w = r_next - r_i
    if kind == "mbr":
        reach = math.sqrt(2.0) * r_next
    elif kind == "tangent":
        reach = math.hypot(r_next, w)
    else:
        raise ValueError(kind)
    return math.ceil((reach - r_next) / w - 1e-12)


def _error_bound(cs: CellSet, kind: str, vp: VisionParams | None, within: float | None) -> float:
    # the cells fix n and a_i; the resolution step may be given separately
    t = cs.target
    vp = vp if vp is not None else cs.params
    step = vp.mu_deg / norm_angle(t, vp)
    half_S = t.length_S / 2
    m = cs.main & (cs.quadrant == 1)
    if within is not None:
        m &= cs.d_lo < within
    area = cs.area
    total = 0.0
    rings = cs.ring[m]
    if len(rings) == 0:
        return 0.0
    lo_all, hi_all, glo_all = cs.d_lo[m], cs.d_hi[m], cs.g_lo[m]
    starts = np.flatnonzero(np.r_[True, rings[1:] != rings[:-1]])
    ends = np.r_[starts[1:], len(rings)]
    area_q1 = area[m]
    for s, e in zip(starts, ends):
        r_i, r_n = lo_all[s], hi_all[s]
        n = wrong_ring_count(r_i, r_n, kind)
        if kind == "mbr":
            window = math.degrees(math.atan(r_n / half_S))
        else:
            window = math.degrees(math.atan(r_n / (half_S + r_i)))
        a_i = int(np.count_nonzero(glo_all[s:e] < window))
        # four reflected quadrants carry identical areas
        total += n * a_i * step * 4.0 * float(area_q1[s:e].sum())
    return total


def error_bound_mbr(cs: CellSet, vp: VisionParams | None = None, within: float | None = None) -> float:
    """Worst-case color*area deviation of the MBR approximation."""
    return _error_bound(cs, "mbr", vp, within)


def error_bound_tangential(cs: CellSet, vp: VisionParams | None = None, within: float | None = None) -> float:
    return _error_bound(cs, "tangent", vp, within)
