"""Run configuration, scenes, dataset ingestion and synthetic obstacle generation."""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from .geometry import Point, Rect, segment_intersects_rect
from .metric import Target, VisionParams
from .quadtree import QuerySpace
from .rtree import ObstacleRect, read_obstacles_csv

SPAN = 10000.0
SIZE_RANGE = (10.0, 100.0)
ZIPF_RANKS = 1000


@dataclass(frozen=True)
class RunConfig:
    mu_arcmin: float = 4.0
    theta_multiplier: float = 1.0
    area_fraction: float = 0.15
    fov_deg: float = 120.0
    target_length_fraction: float = 0.15
    d0: float | None = None          # None: equal to the target length
    gaze_deg: float = 90.0
    variant: str = "exact"
    grid_n: int = 32
    seed: int = 0
    page_size: int = 1024
    inside_nearpoint: str = "clamp"

    def __post_init__(self):
        for name in ("mu_arcmin", "theta_multiplier", "area_fraction", "fov_deg",
                     "target_length_fraction", "grid_n", "page_size"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.d0 is not None and self.d0 <= 0:
            raise ValueError("d0 must be positive")

    def with_(self, **kw) -> "RunConfig":
        return replace(self, **kw)

    @property
    def target_length(self) -> float:
        return self.target_length_fraction * SPAN

    def vision(self) -> VisionParams:
        d0 = self.d0 if self.d0 is not None else self.target_length
        return VisionParams(self.mu_arcmin, d0, self.fov_deg, self.gaze_deg, self.inside_nearpoint)

    def space(self) -> QuerySpace:
        return QuerySpace.from_area_fraction(self.area_fraction, SPAN)

    def target(self) -> Target:
        """Axis-aligned target of length L_T * span, centered in the space."""
        c = self.space().bounds.center
        return Target.centered(Point(c.x, c.y), self.target_length, 0.0)


# the committed demo scene is run with a short target and a distant near
# point so that the whole resolution sweep (down to 1 arcminute) stays cheap
DEMO_CONFIG = RunConfig(target_length_fraction=0.01, d0=1000.0)


def env_seed(default: int) -> int:
    v = os.environ.get("VCM_SEED")
    return int(v) if v not in (None, "") else default


@dataclass
class Scene:
    obstacles: list[ObstacleRect]
    target: Target
    space: QuerySpace
    dropped: list[int] = field(default_factory=list)

    @classmethod
    def assemble(cls, obstacles: Sequence[ObstacleRect], target: Target, space: QuerySpace) -> "Scene":
        """Keep obstacles that do not touch the target (the target needs a clear footprint)."""
        keep, dropped = [], []
        for o in obstacles:
            (dropped if segment_intersects_rect(target.geom, o.rect) else keep).append(o)
        return cls(list(keep), target, space, [o.id for o in dropped])

    @property
    def rects(self) -> list[Rect]:
        return [o.rect for o in self.obstacles]


# --------------------------------------------------------------------------
# ingestion


def _parse_rows(lines: Sequence[str], source: str) -> list[ObstacleRect]:
    out = []
    for lineno, row in enumerate(csv.reader(lines), start=1):
        if not row or not "".join(row).strip():
            continue
        if lineno == 1 and row[0].strip().lower() == "id":
            continue
        if len(row) not in (5, 7):
            raise ValueError(f"{source}:{lineno}: expected 5 or 7 columns, got {len(row)}")
        try:
            oid = int(row[0])
            x0, y0, x1, y1 = (float(v) for v in row[1:5])
            if len(row) == 7:
                float(row[5]), float(row[6])
        except ValueError as e:
            raise ValueError(f"{source}:{lineno}: {e}") from None
        if not (x1 > x0 and y1 > y0):
            raise ValueError(f"{source}:{lineno}: rectangle has no area")
        out.append(ObstacleRect(oid, Rect(x0, y0, x1, y1)))
    if not out:
        raise ValueError(f"{source}: no obstacles")
    return out


def ingest(path, normalize: bool = True, span: float = SPAN) -> list[ObstacleRect]:
    """Read an obstacle CSV, dropping z columns, optionally mapping it into [0, span]^2.

    Normalization is one uniform scale plus a shift, so the aspect ratio is
    kept and the shorter side is letterboxed from 0.
    """
    text = Path(path).read_text().splitlines()
    obs = _parse_rows(text, str(path))
    if not normalize:
        return obs
    b = np.array([tuple(o.rect) for o in obs])
    x0, y0 = b[:, 0].min(), b[:, 1].min()
    w = max(b[:, 2].max() - x0, b[:, 3].max() - y0)
    k = span / w
    return [ObstacleRect(o.id, Rect((o.rect.xmin - x0) * k, (o.rect.ymin - y0) * k,
                                    (o.rect.xmax - x0) * k, (o.rect.ymax - y0) * k)) for o in obs]


# --------------------------------------------------------------------------
# synthetic scenes


def generate(n: int, distribution: str = "uniform", seed: int = 0,
             bounds: Rect = Rect(0.0, 0.0, SPAN, SPAN)) -> list[ObstacleRect]:
    """``n`` random axis-aligned rectangles with sides drawn from [10, 100].

    ``uniform`` spreads centers evenly; ``zipf`` draws each center's distance
    rank from a Zipf law (exponent 1) around a random focus, so obstacles
    crowd near it.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    rng = np.random.default_rng(seed)
    w, h = bounds.xmax - bounds.xmin, bounds.ymax - bounds.ymin
    if distribution == "uniform":
        cx = bounds.xmin + rng.random(n) * w
        cy = bounds.ymin + rng.random(n) * h
    elif distribution == "zipf":
        fx = bounds.xmin + rng.random() * w
        fy = bounds.ymin + rng.random() * h
        ranks = np.arange(1, ZIPF_RANKS + 1)
        p = 1.0 / ranks
        p /= p.sum()
        k = rng.choice(ranks, size=n, p=p)
        r = (k - rng.random(n)) / ZIPF_RANKS * math.hypot(w, h) / 2
        ang = rng.random(n) * 2 * math.pi
        cx = np.clip(fx + r * np.cos(ang), bounds.xmin, bounds.xmax)
        cy = np.clip(fy + r * np.sin(ang), bounds.ymin, bounds.ymax)
    else:
        raise ValueError(f"unknown distribution {distribution!r}")
    sw = rng.uniform(*SIZE_RANGE, n)
    sh = rng.uniform(*SIZE_RANGE, n)
    return [ObstacleRect(i, Rect(float(cx[i] - sw[i] / 2), float(cy[i] - sh[i] / 2),
                                 float(cx[i] + sw[i] / 2), float(cy[i] + sh[i] / 2)))
            for i in range(n)]


def demo_obstacles() -> list[ObstacleRect]:
    """The committed demo scene: 20 obstacles inside the default query space."""
    with resources.files("vcmap").joinpath("data/demo_obstacles.csv").open() as fh:
        return read_obstacles_csv(fh)


def make_demo_obstacles(seed: int = 7, n: int = 20) -> list[ObstacleRect]:
    """How the committed demo file was produced (kept for reference and tests)."""
    cfg = DEMO_CONFIG
    sp = cfg.space()
    inner = Rect(sp.bounds.xmin + 100, sp.bounds.ymin + 100, sp.bounds.xmax - 100, sp.bounds.ymax - 100)
    out, k = [], 0
    t = cfg.target()
    while len(out) < n:
        for o in generate(4 * n, "uniform", seed + k, inner):
            r = Rect(*(round(v, 3) for v in o.rect))
            if not segment_intersects_rect(t.geom, r) and len(out) < n:
                out.append(ObstacleRect(len(out), r))
        k += 1
    return out
