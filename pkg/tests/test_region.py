import io
import math

import numpy as np
import pytest

from vcmap.geometry import Point, Rect, Segment, points_in_convex, segment_intersects_rect, points_in_wedge, segments_hit_rects
from vcmap.metric import Target, VisionParams
from vcmap.quadtree import (CAUSE_SHADOW, OBSTRUCTED, VISIBLE, QuadTree, QuerySpace, floor_level)
from vcmap.region import (ShadowPolygon, apply_shadow, build_visible_region, init_fov, is_fully_obstructed,
                          shadow_polygon)
from vcmap.rtree import AccessStats, ObstacleRect, bulk_load

SPACE = QuerySpace(Rect(0, 0, 1000, 1000))
T = Target(Segment(Point(450, 500), Point(550, 500)))
VP = VisionParams(4, 50, 120, 90)


def tiles_exactly(tree: QuadTree) -> bool:
    tree.sort()
    k = tree.morton_keys()
    span = np.left_shift(1, 2 * (tree.floor - tree.level.astype(np.int64)))
    return k[0] == 0 and (k[1:] == (k + span)[:-1]).all() and k[-1] + span[-1] == 1 << (2 * tree.floor)


def leaf_of(tree, px, py):
    return tree.state_at(np.atleast_1d(px), np.atleast_1d(py))


class TestQuadTree:
    def test_floor_level(self):
        assert floor_level(1000, 10) == 7      # 1000/128 = 7.8 < 10 <= 15.6
        assert floor_level(1000, 1000.1) == 0

    def test_csv_states(self):
        tree = init_fov(SPACE, T, VP, 200)
        buf = io.StringIO()
        tree.to_csv(buf)
        lines = buf.getvalue().splitlines()
        assert lines[0] == "xmin,ymin,xmax,ymax,state"
        assert {ln.rsplit(",", 1)[1] for ln in lines[1:]} <= {"visible", "obstructed"}

    def test_state_at_finds_containing_leaf(self, rng):
        tree = init_fov(SPACE, T, VP, 20)
        px, py = rng.uniform(0, 1000, (2, 5000))
        i = tree.state_at(px, py)
        x0, y0, x1, y1 = tree.boxes()
        assert ((x0[i] <= px) & (px <= x1[i]) & (y0[i] <= py) & (py <= y1[i])).all()


class TestFov:
    def test_full_circle(self):
        tree = init_fov(SPACE, T, VisionParams(4, 50, 360, 90), 10)
        assert len(tree) == 1 and tree.state[0] == VISIBLE

    def test_behind_obstructed(self):
        tree = init_fov(SPACE, T, VP, 10)
        assert tree.state[leaf_of(tree, 500, 100)][0] == OBSTRUCTED
        assert tree.state[leaf_of(tree, 500, 900)][0] == VISIBLE

    def test_boundary_band_at_floor(self):
        theta = 10.0
        tree = init_fov(SPACE, T, VP, theta)
        assert tiles_exactly(tree)
        w = VP.wedge(T.midpoint)
        x0, y0, x1, y1 = tree.boxes()
        corners_in = np.stack([points_in_wedge(x, y, w) for x, y in ((x0, y0), (x1, y0), (x0, y1), (x1, y1))])
        straddle = corners_in.any(axis=0) & ~corners_in.all(axis=0)
        side = x1 - x0
        assert straddle.any()
        assert ((side[straddle] >= theta / 2) & (side[straddle] <= theta)).all()


def random_obstacle(rng, t, lo=0, hi=1000):
    while True:
        x, y = rng.uniform(lo, hi, 2)
        r = Rect(x, y, x + rng.uniform(10, 100), y + rng.uniform(10, 100))
        if not segment_intersects_rect(t.geom, r):
            return r


class TestShadow:
    def test_matches_triangle_predicate(self, rng):
        for k in range(15):
            r = random_obstacle(rng, T)
            sp = shadow_polygon(ObstacleRect(k, r), T, SPACE)
            px, py = rng.uniform(0, 1000, (2, 10000))
            truth = segments_hit_rects(px, py, T.geom, [r])
            got = points_in_convex(px, py, sp.poly) if not sp.empty else np.zeros(len(px), bool)
            assert (truth == got).all()

    def test_close_to_target(self, rng):
        for k, r in enumerate([Rect(495, 500.5, 505, 510), Rect(551, 495, 560, 505), Rect(440, 490, 449, 499)]):
            sp = shadow_polygon(ObstacleRect(k, r), T, SPACE)
            px, py = rng.uniform(0, 1000, (2, 20000))
            assert (segments_hit_rects(px, py, T.geom, [r]) == points_in_convex(px, py, sp.poly)).all()

    def test_symmetric_on_bisector(self):
        sp = shadow_polygon(ObstacleRect(0, Rect(480, 600, 520, 640)), T, SPACE)
        g = np.linspace(0, 1000, 201)
        gx, gy = np.meshgrid(g, g)
        a = points_in_convex(gx.ravel(), gy.ravel(), sp.poly)
        b = points_in_convex(1000 - gx.ravel(), gy.ravel(), sp.poly)
        assert (a == b).all()

    def test_clipped_away(self):
        # an obstacle outside the space whose shadow points away from it
        space = QuerySpace(Rect(0, 0, 100, 100))
        t = Target(Segment(Point(40, 50), Point(60, 50)))
        sp = shadow_polygon(ObstacleRect(0, Rect(40, -300, 60, -200)), t, space)
        assert sp.empty

    def test_overlapping_target_rejected(self):
        with pytest.raises(ValueError):
            shadow_polygon(ObstacleRect(0, Rect(490, 490, 510, 510)), T, SPACE)


class TestApplyShadow:
    def test_whole_space(self):
        tree = QuadTree(SPACE, 10)
        poly = np.array([[-10, -10], [2000, -10], [2000, 2000], [-10, 2000]], float)
        apply_shadow(tree, ShadowPolygon(poly, 0))
        assert (tree.state == OBSTRUCTED).all()

    def test_empty(self):
        tree = QuadTree(SPACE, 10)
        assert apply_shadow(tree, ShadowPolygon(None, 0)) == 0 and len(tree) == 1

    def test_union_of_two(self, rng):
        theta = 8.0
        tree = QuadTree(SPACE, theta)
        rects = [Rect(480, 600, 520, 640), Rect(510, 620, 560, 700)]
        polys = [shadow_polygon(ObstacleRect(i, r), T, SPACE) for i, r in enumerate(rects)]
        for p in polys:
            apply_shadow(tree, p)
        assert tiles_exactly(tree)
        px, py = rng.uniform(0, 1000, (2, 20000))
        truth = segments_hit_rects(px, py, T.geom, rects)
        got = tree.state[tree.state_at(px, py)] == OBSTRUCTED
        bad = truth != got
        if bad.any():
            # disagreements sit in floor blocks cut by a shadow edge
            x0, y0, x1, y1 = tree.boxes()
            i = tree.state_at(px[bad], py[bad])
            assert ((x1 - x0)[i] < theta).all()
        assert bad.mean() < 0.01


class TestIsFullyObstructed:
    def test_cases_and_scan(self, rng):
        tree = QuadTree(SPACE, 10)
        apply_shadow(tree, shadow_polygon(ObstacleRect(0, Rect(480, 600, 520, 640)), T, SPACE))
        assert is_fully_obstructed(tree, Rect(495, 900, 505, 910))
        assert not is_fully_obstructed(tree, Rect(100, 100, 120, 120))
        x0, y0, x1, y1 = tree.boxes()
        for _ in range(300):
            x, y = rng.uniform(0, 980, 2)
            r = Rect(x, y, x + rng.uniform(1, 60), y + rng.uniform(1, 60))
            hit = [k for k in range(len(tree)) if x0[k] < r.xmax and r.xmin < x1[k] and y0[k] < r.ymax and r.ymin < y1[k]]
            assert is_fully_obstructed(tree, r) == all(tree.state[k] == OBSTRUCTED for k in hit)
            # rectangles poking out of the space never count as exactly covered
            exact = r.xmax <= 1000 and r.ymax <= 1000 and all(tree.cause[k] == CAUSE_SHADOW for k in hit)
            assert is_fully_obstructed(tree, r, exact_only=True) == exact


class TestBuildRegion:
    def test_no_obstacles(self):
        tree, _ = build_visible_region(SPACE, T, VP, None, 10)
        ref = init_fov(SPACE, T, VP, 10)
        tree.sort(), ref.sort()
        assert np.array_equal(tree.state, ref.state) and np.array_equal(tree.level, ref.level)

    def test_one_obstacle_on_bisector(self, rng):
        theta = 5.0
        r = Rect(480, 700, 520, 740)
        tree, st = build_visible_region(SPACE, T, VP, bulk_load([ObstacleRect(0, r)]), theta)
        px, py = rng.uniform(0, 1000, (2, 10000))
        truth = ~points_in_wedge(px, py, VP.wedge(T.midpoint)) | segments_hit_rects(px, py, T.geom, [r])
        got = tree.state[tree.state_at(px, py)] == OBSTRUCTED
        bad = truth != got
        assert bad.mean() < 0.01
        x0, y0, x1, y1 = tree.boxes()
        assert ((x1 - x0)[tree.state_at(px[bad], py[bad])] < theta).all()
        assert st.obstacles_emitted == 1

    def test_hidden_obstacle_pruned(self):
        near = ObstacleRect(0, Rect(470, 600, 530, 620))
        hidden = ObstacleRect(1, Rect(495, 800, 505, 810))   # deep inside the first shadow
        st = AccessStats()
        build_visible_region(SPACE, T, VP, bulk_load([near, hidden]), 5.0, st)
        assert st.obstacles_emitted == 1 and st.obstacles_pruned == 1

    def test_order_independent(self, rng):
        obs = []
        while len(obs) < 12:
            obs.append(ObstacleRect(len(obs), random_obstacle(rng, T)))
        idx = bulk_load(obs)
        a, _ = build_visible_region(SPACE, T, VP, idx, 8.0)
        b, _ = build_visible_region(SPACE, T, VP, idx, 8.0, order="reverse")
        px, py = rng.uniform(0, 1000, (2, 20000))
        sa = a.state[a.state_at(px, py)]
        sb = b.state[b.state_at(px, py)]
        assert (sa == sb).mean() > 0.995
