"""Static R-tree over rectangles, STR-packed, with simulated page accesses.

The same structure indexes obstacles (ordered retrieval by distance to the
target) and approximated color cells (range queries during the map join).
A node is charged one access whenever its children are inspected.
"""

from __future__ import annotations

import csv
import heapq
import math
from dataclasses import dataclass
from typing import Callable, Iterator, Sequence, TextIO

import numpy as np

from .geometry import EPS, Rect, Segment

ENTRY_BYTES = 40  # four float64 coordinates plus a child/object reference


@dataclass(frozen=True)
class ObstacleRect:
    id: int
    rect: Rect


@dataclass
class AccessStats:
    node_accesses: int = 0
    obstacles_emitted: int = 0
    obstacles_pruned: int = 0
    nodes_pruned: int = 0


def fanout_for(page_size: int) -> int:
    f = page_size // ENTRY_BYTES
    if f < 2:
        raise ValueError("page too small for a fan-out of 2")
    return f


@dataclass
class _Level:
    mbr: np.ndarray      # (k, 4) xmin, ymin, xmax, ymax
    start: np.ndarray    # child range into the level below (or the entries)
    end: np.ndarray


def _union(boxes: np.ndarray, start: np.ndarray, end: np.ndarray) -> np.ndarray:
    out = np.empty((len(start), 4))
    out[:, 0] = np.minimum.reduceat(boxes[:, 0], start)
    out[:, 1] = np.minimum.reduceat(boxes[:, 1], start)
    out[:, 2] = np.maximum.reduceat(boxes[:, 2], start)
    out[:, 3] = np.maximum.reduceat(boxes[:, 3], start)
    return out


def _str_order(boxes: np.ndarray, f: int) -> np.ndarray:
    """Sort-tile-recursive permutation: x slabs of whole pages, y order inside."""
    n = len(boxes)
    pages = math.ceil(n / f)
    slabs = max(1, math.ceil(math.sqrt(pages)))
    per_slab = math.ceil(pages / slabs) * f
    cx = (boxes[:, 0] + boxes[:, 2]) / 2
    cy = (boxes[:, 1] + boxes[:, 3]) / 2
    by_x = np.lexsort((cy, cx))
    perm = []
    for s in range(0, n, per_slab):
        chunk = by_x[s:s + per_slab]
        perm.append(chunk[np.lexsort((cx[chunk], cy[chunk]))])
    return np.concatenate(perm)


class RTree:
    """Immutable packed R-tree. ``levels[0]`` are the leaves, ``levels[-1]`` the root."""

    def __init__(self, boxes: np.ndarray, ids: np.ndarray, page_size: int = 1024):
        boxes = np.asarray(boxes, dtype=float).reshape(-1, 4)
        if len(boxes) == 0:
            raise ValueError("cannot index an empty set")
        self.page_size = page_size
        self.fanout = f = fanout_for(page_size)
        perm = _str_order(boxes, f)
        self.boxes = boxes[perm]
        self.ids = np.asarray(ids)[perm]
        self.levels: list[_Level] = []
        below = self.boxes
        while True:
            if self.levels:
                # the level just built gets STR-ordered before grouping
                top = self.levels[-1]
                perm = _str_order(top.mbr, f)
                self.levels[-1] = _Level(top.mbr[perm], top.start[perm], top.end[perm])
                below = self.levels[-1].mbr
            n = len(below)
            start = np.arange(0, n, f)
            end = np.minimum(start + f, n)
            self.levels.append(_Level(_union(below, start, end), start, end))
            if len(start) == 1:
                break

    @property
    def height(self) -> int:
        """Number of node levels (a single root leaf has height 1)."""
        return len(self.levels)

    @property
    def node_count(self) -> int:
        return sum(len(lv.start) for lv in self.levels)

    @property
    def root_mbr(self) -> Rect:
        return Rect(*self.levels[-1].mbr[0])

    def all_entries(self) -> list[tuple[int, Rect]]:
        return [(int(i), Rect(*b)) for i, b in zip(self.ids, self.boxes)]

    def check(self) -> bool:
        """Every node MBR contains its children."""
        for k, lv in enumerate(self.levels):
            child = self.boxes if k == 0 else self.levels[k - 1].mbr
            for m, s, e in zip(lv.mbr, lv.start, lv.end):
                c = child[s:e]
                if (c[:, 0] < m[0]).any() or (c[:, 1] < m[1]).any() \
                        or (c[:, 2] > m[2]).any() or (c[:, 3] > m[3]).any():
                    return False
        return True

    def range_query_many(self, qboxes: np.ndarray, stats: AccessStats | None = None):
        """All (query index, entry id) pairs whose closed boxes intersect.

        Descends the tree for all queries at once; each (query, node) pair
        whose children get inspected counts as one access.
        """
        q = np.asarray(qboxes, dtype=float).reshape(-1, 4)
        qi = np.arange(len(q))
        node = np.zeros(len(q), dtype=np.int64)
        root = self.levels[-1].mbr[0]
        keep = _overlaps(q, root[None, :])
        qi, node = qi[keep], node[keep]
        for k in range(len(self.levels) - 1, -1, -1):
            lv = self.levels[k]
            if stats is not None:
                stats.node_accesses += len(qi)
            s, e = lv.start[node], lv.end[node]
            cnt = e - s
            rep_q = np.repeat(qi, cnt)
            child = np.repeat(s - np.r_[0, np.cumsum(cnt)[:-1]], cnt) + np.arange(cnt.sum())
            boxes = self.boxes if k == 0 else self.levels[k - 1].mbr
            keep = _overlaps(q[rep_q], boxes[child])
            qi, node = rep_q[keep], child[keep]
        return qi, self.ids[node]


def _overlaps(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return ((a[:, 0] <= b[:, 2] + EPS) & (b[:, 0] <= a[:, 2] + EPS)
            & (a[:, 1] <= b[:, 3] + EPS) & (b[:, 1] <= a[:, 3] + EPS))


def segment_box_distance(s: Segment, boxes: np.ndarray) -> np.ndarray:
    """Distance from a segment to many closed boxes (0 where they meet)."""
    b = np.asarray(boxes, dtype=float).reshape(-1, 4)
    x0, y0, x1, y1 = b.T
    (ax, ay), (bx, by) = s
    dx, dy = bx - ax, by - ay

    def pt_box(px, py):
        ex = np.maximum.reduce([x0 - px, np.zeros_like(x0), px - x1])
        ey = np.maximum.reduce([y0 - py, np.zeros_like(y0), py - y1])
        return np.hypot(ex, ey)

    d = np.minimum(pt_box(ax, ay), pt_box(bx, by))
    L2 = dx * dx + dy * dy
    for cx, cy in ((x0, y0), (x1, y0), (x1, y1), (x0, y1)):
        t = np.clip(((cx - ax) * dx + (cy - ay) * dy) / L2, 0.0, 1.0) if L2 > 0 else 0.0
        d = np.minimum(d, np.hypot(cx - ax - t * dx, cy - ay - t * dy))
    # crossing: bounding boxes overlap and the corners straddle the segment line
    bbox = ((x0 <= max(ax, bx)) & (min(ax, bx) <= x1) & (y0 <= max(ay, by)) & (min(ay, by) <= y1))
    side = [dx * (cy - ay) - dy * (cx - ax) for cx, cy in ((x0, y0), (x1, y0), (x1, y1), (x0, y1))]
    side = np.stack(side, axis=1)
    straddle = (side.min(axis=1) <= 0) & (side.max(axis=1) >= 0)
    d[bbox & straddle] = 0.0
    return d


class ObstacleIndex(RTree):
    """R-tree over obstacle rectangles."""

    @classmethod
    def bulk_load(cls, obstacles: Sequence[ObstacleRect], page_size: int = 1024) -> "ObstacleIndex":
        if not obstacles:
            raise ValueError("no obstacles to index")
        boxes = np.array([tuple(o.rect) for o in obstacles], dtype=float)
        ids = np.array([o.id for o in obstacles], dtype=np.int64)
        return cls(boxes, ids, page_size)

    def __len__(self):
        return len(self.ids)


def bulk_load(obstacles: Sequence[ObstacleRect], page_size: int = 1024) -> ObstacleIndex:
    return ObstacleIndex.bulk_load(obstacles, page_size)


def incremental_retrieve(idx: ObstacleIndex, seg: Segment,
                         prune: Callable[[Rect], bool] | None = None,
                         limit_dist: float = math.inf,
                         stats: AccessStats | None = None) -> Iterator[tuple[ObstacleRect, float]]:
    """Best-first stream of (obstacle, mindist) in non-decreasing distance to ``seg``.

    ``prune`` is consulted when an item reaches the front of the queue, so it
    sees the visible region as it stands at that moment. Equal distances are
    broken by expanding nodes first, then by ascending obstacle id.
    """
    if stats is None:
        stats = AccessStats()
    top = len(idx.levels) - 1
    root = idx.levels[top].mbr[0]
    d = float(segment_box_distance(seg, root[None, :])[0])
    heap: list = []
    if d <= limit_dist:
        heapq.heappush(heap, (d, 0, 0, top, 0))
    while heap:
        d, kind, tie, level, i = heapq.heappop(heap)
        if kind == 1:
            r = Rect(*idx.boxes[i])
            if prune is not None and prune(r):
                stats.obstacles_pruned += 1
                continue
            stats.obstacles_emitted += 1
            yield ObstacleRect(int(idx.ids[i]), r), d
            continue
        lv = idx.levels[level]
        if prune is not None and prune(Rect(*lv.mbr[i])):
            stats.nodes_pruned += 1
            continue
        stats.node_accesses += 1
        s, e = int(lv.start[i]), int(lv.end[i])
        if level == 0:
            dist = segment_box_distance(seg, idx.boxes[s:e])
            for j, dj in zip(range(s, e), dist):
                if dj <= limit_dist:
                    heapq.heappush(heap, (float(dj), 1, int(idx.ids[j]), -1, j))
        else:
            child = idx.levels[level - 1].mbr[s:e]
            dist = segment_box_distance(seg, child)
            for j, dj in zip(range(s, e), dist):
                if dj <= limit_dist:
                    heapq.heappush(heap, (float(dj), 0, j, level - 1, j))


def read_obstacles_csv(fh: TextIO) -> list[ObstacleRect]:
    """Read ``id,xmin,ymin,xmax,ymax[,zmin,zmax]`` rows; z columns are ignored."""
    out = []
    for row in csv.reader(fh):
        if not row or row[0].strip().lower() == "id":
            continue
        i, x0, y0, x1, y1 = row[:5]
        r = Rect(float(x0), float(y0), float(x1), float(y1))
        if not (r.xmax > r.xmin and r.ymax > r.ymin):
            raise ValueError(f"obstacle {i} has no area")
        out.append(ObstacleRect(int(i), r))
    return out


def write_obstacles_csv(fh: TextIO, obstacles: Sequence[ObstacleRect]) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["id", "xmin", "ymin", "xmax", "ymax"])
    for o in obstacles:
        w.writerow([o.id, *(repr(float(v)) for v in o.rect)])
