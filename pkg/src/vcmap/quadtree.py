"""Linear region quadtree over a square query space.

Leaves are stored column-wise: level, integer block coordinates at that
level, a state and a color. Subdivision is always driven by a vectorized
classifier returning 0 (outside), 1 (inside) or 2 (partial) per block, and
stops at the floor level, the first level whose side is below the
threshold; floor blocks are then decided by their center.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable, TextIO

import numpy as np

from .geometry import Rect

VISIBLE = 0      # visible, not yet colored
OBSTRUCTED = 1
COLORED = 2

STATE_NAMES = {VISIBLE: "visible", OBSTRUCTED: "obstructed", COLORED: "colored"}

# why a leaf is obstructed
CAUSE_NONE = 0
CAUSE_SHADOW = 1         # decided exactly (block inside a shadow)
CAUSE_SHADOW_CENTER = 2  # floor block decided by its center
CAUSE_FOV = 3            # outside the field of view

Classifier = Callable[[np.ndarray, np.ndarray, np.ndarray, np.ndarray], np.ndarray]
CenterTest = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class QuerySpace:
    bounds: Rect

    def __post_init__(self):
        b = self.bounds
        if not (b.xmax > b.xmin and b.ymax > b.ymin):
            raise ValueError("query space must have positive area")
        if not math.isclose(b.xmax - b.xmin, b.ymax - b.ymin, rel_tol=1e-9):
            raise ValueError("query space must be square")

    @classmethod
    def centered(cls, center, side: float) -> "QuerySpace":
        h = side / 2
        return cls(Rect(center[0] - h, center[1] - h, center[0] + h, center[1] + h))

    @classmethod
    def from_area_fraction(cls, area_fraction: float, span: float = 10000.0, center=None) -> "QuerySpace":
        """Square covering ``area_fraction`` of a ``span`` x ``span`` data space."""
        if not 0 < area_fraction <= 1:
            raise ValueError("area fraction must be in (0, 1]")
        if center is None:
            center = (span / 2, span / 2)
        return cls.centered(center, math.sqrt(area_fraction) * span)

    @property
    def side(self) -> float:
        return self.bounds.xmax - self.bounds.xmin

    @property
    def corners(self):
        return self.bounds.corners

    def max_distance(self, p) -> float:
        return max(math.dist(p, c) for c in self.bounds.corners)


def floor_level(side: float, theta: float) -> int:
    """First level whose block side is strictly below ``theta``."""
    if theta <= 0:
        raise ValueError("theta must be positive")
    lev = 0
    while side / (1 << lev) >= theta:
        lev += 1
    return lev


class QuadTree:
    def __init__(self, space: QuerySpace, theta: float):
        self.space = space
        self.theta = theta
        self.floor = floor_level(space.side, theta)
        if self.floor > 40:
            raise ValueError("threshold too small for the query space")
        self.level = np.zeros(1, dtype=np.int8)
        self.ix = np.zeros(1, dtype=np.int64)
        self.iy = np.zeros(1, dtype=np.int64)
        self.state = np.full(1, VISIBLE, dtype=np.int8)
        self.cause = np.full(1, CAUSE_NONE, dtype=np.int8)
        self.color = np.zeros(1)

    def __len__(self):
        return len(self.level)

    def copy(self) -> "QuadTree":
        q = QuadTree.__new__(QuadTree)
        q.space, q.theta, q.floor = self.space, self.theta, self.floor
        for k in ("level", "ix", "iy", "state", "cause", "color"):
            setattr(q, k, getattr(self, k).copy())
        return q

    # geometry of leaves
    def side_of(self, level) -> np.ndarray:
        return self.space.side / np.left_shift(1, np.asarray(level, dtype=np.int64)).astype(float)

    def boxes(self, sel=None):
        lev, ix, iy = self.level, self.ix, self.iy
        if sel is not None:
            lev, ix, iy = lev[sel], ix[sel], iy[sel]
        s = self.side_of(lev)
        x0 = self.space.bounds.xmin + ix * s
        y0 = self.space.bounds.ymin + iy * s
        return x0, y0, x0 + s, y0 + s

    def centers(self, sel=None):
        x0, y0, x1, y1 = self.boxes(sel)
        return (x0 + x1) / 2, (y0 + y1) / 2

    def area(self, sel=None) -> np.ndarray:
        lev = self.level if sel is None else self.level[sel]
        return self.side_of(lev) ** 2

    def morton_keys(self) -> np.ndarray:
        """Z-order position of each leaf's lower-left corner at the floor level."""
        shift = (self.floor - self.level.astype(np.int64))
        x = self.ix << shift
        y = self.iy << shift
        return _interleave(x) | (_interleave(y) << 1)

    def sort(self) -> None:
        order = np.argsort(self.morton_keys(), kind="stable")
        for k in ("level", "ix", "iy", "state", "cause", "color"):
            setattr(self, k, getattr(self, k)[order])

    def refine(self, sel: np.ndarray, classify: Classifier, center_in: CenterTest,
               state: int, exact_cause: int, center_cause: int) -> int:
        """Set ``state`` on the part of the selected leaves covered by a region.

        ``classify`` decides blocks (0 outside, 1 inside, 2 partial); partial
        blocks are split until the floor level, where ``center_in`` decides.
        Returns the number of leaves whose state changed.
        """
        sel = np.flatnonzero(sel) if sel.dtype == bool else np.asarray(sel)
        if len(sel) == 0:
            return 0
        keep = np.ones(len(self.level), dtype=bool)
        keep[sel] = False
        lev, ix, iy = self.level[sel], self.ix[sel], self.iy[sel]
        st, ca, co = self.state[sel], self.cause[sel], self.color[sel]
        out = []
        changed = 0
        while len(lev):
            s = self.side_of(lev)
            x0 = self.space.bounds.xmin + ix * s
            y0 = self.space.bounds.ymin + iy * s
            cls = classify(x0, y0, x0 + s, y0 + s)
            at_floor = lev >= self.floor
            split = (cls == 2) & ~at_floor
            hit = cls == 1
            ctr = (cls == 2) & at_floor
            new_cause = np.where(hit, exact_cause, center_cause)
            if ctr.any():
                inside = center_in(x0[ctr] + s[ctr] / 2, y0[ctr] + s[ctr] / 2)
                tmp = np.zeros(len(lev), dtype=bool)
                tmp[np.flatnonzero(ctr)[inside]] = True
                hit |= tmp
            changed += int(hit.sum())
            st = np.where(hit, state, st).astype(np.int8)
            ca = np.where(hit, new_cause, ca).astype(np.int8)
            fin = ~split
            out.append((lev[fin], ix[fin], iy[fin], st[fin], ca[fin], co[fin]))
            lev, ix, iy = lev[split], ix[split], iy[split]
            st, ca, co = st[split], ca[split], co[split]
            lev, ix, iy, st, ca, co = _children(lev, ix, iy, st, ca, co)
        parts = [(self.level[keep], self.ix[keep], self.iy[keep],
                  self.state[keep], self.cause[keep], self.color[keep])] + out
        self.level, self.ix, self.iy, self.state, self.cause, self.color = (
            np.concatenate([p[k] for p in parts]) for k in range(6))
        return changed

    def leaves_overlapping(self, r: Rect) -> np.ndarray:
        x0, y0, x1, y1 = self.boxes()
        return (x0 < r.xmax) & (r.xmin < x1) & (y0 < r.ymax) & (r.ymin < y1)

    def state_at(self, px, py) -> np.ndarray:
        """Leaf index containing each point (points on shared edges go up/right)."""
        px = np.asarray(px, dtype=float)
        py = np.asarray(py, dtype=float)
        n = 1 << self.floor
        b = self.space.bounds
        fx = np.clip(np.floor((px - b.xmin) / self.space.side * n), 0, n - 1).astype(np.int64)
        fy = np.clip(np.floor((py - b.ymin) / self.space.side * n), 0, n - 1).astype(np.int64)
        key = _interleave(fx) | (_interleave(fy) << 1)
        keys = self.morton_keys()
        order = np.argsort(keys, kind="stable")
        pos = np.searchsorted(keys[order], key, side="right") - 1
        return order[pos]

    def to_csv(self, fh: TextIO, with_color: bool = False) -> None:
        self.sort()
        w = csv.writer(fh, lineterminator="\n")
        x0, y0, x1, y1 = self.boxes()
        if with_color:
            w.writerow(["xmin", "ymin", "xmax", "ymax", "color"])
            for row in zip(x0, y0, x1, y1, self.color):
                w.writerow([repr(float(v)) for v in row])
        else:
            w.writerow(["xmin", "ymin", "xmax", "ymax", "state"])
            for a, b, c, d, s in zip(x0, y0, x1, y1, self.state):
                w.writerow([repr(float(a)), repr(float(b)), repr(float(c)), repr(float(d)),
                            STATE_NAMES[int(s)]])


def _children(lev, ix, iy, *payload):
    n = len(lev)
    lev4 = np.repeat(lev + 1, 4).astype(np.int8)
    dx = np.tile([0, 1, 0, 1], n)
    dy = np.tile([0, 0, 1, 1], n)
    ix4 = np.repeat(ix * 2, 4) + dx
    iy4 = np.repeat(iy * 2, 4) + dy
    return (lev4, ix4, iy4) + tuple(np.repeat(p, 4) for p in payload)


def _interleave(v: np.ndarray) -> np.ndarray:
    """Spread the low 32 bits of ``v`` onto even bit positions."""
    v = v.astype(np.uint64) & np.uint64(0xFFFFFFFF)
    for shift, mask in ((16, 0x0000FFFF0000FFFF), (8, 0x00FF00FF00FF00FF),
                        (4, 0x0F0F0F0F0F0F0F0F), (2, 0x3333333333333333),
                        (1, 0x5555555555555555)):
        v = (v | (v << np.uint64(shift))) & np.uint64(mask)
    return v.astype(np.int64)
