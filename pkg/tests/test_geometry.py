import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vcmap.geometry import (Point, Rect, Relation, Segment, Wedge, blocks_vs_convex, classify_rect_vs_polygon,
                            clip_polygon_to_rect, convex_hull, mindist, point_in_polygon, points_in_convex,
                            points_in_wedge, polygon_area, segment_intersects_rect, segments_hit_rects,
                            tangent_vertices, triangle_intersects_rect, wedge_classify)

P, S, R = Point, Segment, Rect


def seg(x0, y0, x1, y1):
    return S(P(x0, y0), P(x1, y1))


def sampled_segment_hits(s: Segment, r: Rect, n=4001) -> bool:
    t = np.linspace(0, 1, n)
    x = s.a.x + t * (s.b.x - s.a.x)
    y = s.a.y + t * (s.b.y - s.a.y)
    return bool(((x >= r.xmin) & (x <= r.xmax) & (y >= r.ymin) & (y <= r.ymax)).any())


def sampled_triangle_hits(p, s, r, n=401):
    return any(sampled_segment_hits(S(P(*p), P(s.a.x + u * (s.b.x - s.a.x), s.a.y + u * (s.b.y - s.a.y))), r, 801)
               for u in np.linspace(0, 1, n))


class TestSegmentRect:
    def test_through_interior(self):
        assert segment_intersects_rect(seg(0, 0, 10, 0), R(4, -1, 6, 1))

    def test_disjoint(self):
        assert not segment_intersects_rect(seg(0, 0, 1, 0), R(4, 4, 6, 6))

    def test_endpoint_on_corner(self):
        assert segment_intersects_rect(seg(0, 0, 10, 10), R(5, 5, 7, 7))
        # lattice oracle: points of the segment on a fine grid that lie in the rect
        assert sampled_segment_hits(seg(0, 0, 10, 10), R(5, 5, 7, 7))

    def test_touching_corner_only(self):
        assert segment_intersects_rect(seg(0, 0, 5, 5), R(5, 5, 7, 7))

    @settings(max_examples=300, deadline=None)
    @given(st.lists(st.integers(-20, 20), min_size=8, max_size=8))
    def test_matches_sampling_on_integer_geometry(self, v):
        s = seg(*v[:4])
        x0, x1 = sorted(v[4:6])
        y0, y1 = sorted(v[6:8])
        if x0 == x1 or y0 == y1 or s.length == 0:
            return
        r = R(x0, y0, x1, y1)
        got = segment_intersects_rect(s, r)
        if got != sampled_segment_hits(s, r, 20001):
            # sampling can only miss grazing contacts; those are within a sample step
            t = np.linspace(0, 1, 200001)
            x = s.a.x + t * (s.b.x - s.a.x)
            y = s.a.y + t * (s.b.y - s.a.y)
            d = np.hypot(np.maximum.reduce([r.xmin - x, 0 * x, x - r.xmax]),
                         np.maximum.reduce([r.ymin - y, 0 * y, y - r.ymax]))
            assert got and d.min() < 1e-3


class TestTriangleRect:
    t = seg(-1, 0, 1, 0)

    def test_between_viewer_and_target(self):
        assert triangle_intersects_rect(P(0, 5), self.t, R(-0.2, 2, 0.2, 3))

    def test_far(self):
        assert not triangle_intersects_rect(P(0, 5), self.t, R(10, 10, 11, 11))

    def test_against_sightline_sampling(self):
        r = R(0.9, 2, 3, 3)
        assert triangle_intersects_rect(P(0, 5), self.t, r) == sampled_triangle_hits(P(0, 5), self.t, r)

    def test_random_against_sightline_sampling(self, rng):
        for _ in range(150):
            p = P(*rng.uniform(-5, 5, 2))
            c = rng.uniform(-4, 4, 2)
            w, h = rng.uniform(0.2, 2, 2)
            r = R(c[0], c[1], c[0] + w, c[1] + h)
            exact = triangle_intersects_rect(p, self.t, r)
            approx = sampled_triangle_hits(p, self.t, r, 81)
            if exact != approx:
                assert exact and not approx   # sampling can only miss grazing contacts


class TestTangents:
    def test_symmetric(self):
        assert tangent_vertices(P(0, 0), R(1, 1, 2, 2)) == (P(1, 2), P(2, 1))

    def test_below(self):
        assert tangent_vertices(P(1.5, 0), R(1, 1, 2, 2)) == (P(1, 1), P(2, 1))

    def test_left(self):
        assert tangent_vertices(P(0, 1.5), R(1, 1, 2, 2)) == (P(1, 2), P(1, 1))

    def test_inside_rejected(self):
        with pytest.raises(ValueError):
            tangent_vertices(P(1.5, 1.5), R(1, 1, 2, 2))

    def test_all_corners_between_tangents(self, rng):
        for _ in range(200):
            r = R(0, 0, *rng.uniform(0.5, 3, 2))
            p = P(*rng.uniform(-6, 6, 2))
            if r.contains_point(p, 1e-6):
                continue
            left, right = tangent_vertices(p, r)
            for c in r.corners:
                # every corner lies clockwise of the left tangent and counterclockwise of the right one
                cl = (left.x - p.x) * (c.y - p.y) - (left.y - p.y) * (c.x - p.x)
                cr = (right.x - p.x) * (c.y - p.y) - (right.y - p.y) * (c.x - p.x)
                assert cl <= 1e-9 and cr >= -1e-9


class TestPolygons:
    unit = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], float)

    def test_clip_identity(self):
        out = clip_polygon_to_rect(self.unit, R(0, 0, 1, 1))
        assert polygon_area(out) == pytest.approx(1.0)
        assert set(map(tuple, out)) == set(map(tuple, self.unit))

    def test_clip_inside(self):
        tri = np.array([[0.2, 0.2], [0.8, 0.2], [0.5, 0.7]])
        out = clip_polygon_to_rect(tri, R(0, 0, 1, 1))
        assert polygon_area(out) == pytest.approx(polygon_area(tri))

    def test_clip_half_overlap_monte_carlo(self, rng):
        tri = np.array([[-1.0, 0.0], [1.0, 0.0], [0.0, 2.0]])
        r = R(0, 0, 2, 2)
        out = clip_polygon_to_rect(tri, r)
        assert len(out) == 4
        pts = rng.uniform(0, 2, (200_000, 2))
        inside = np.array([point_in_polygon(P(*q), tri) for q in pts[:20000]])
        mc = inside.mean() * 4.0
        assert polygon_area(out) == pytest.approx(1.0)
        assert mc == pytest.approx(polygon_area(out), rel=3e-2)

    def test_clip_empty(self):
        assert clip_polygon_to_rect(self.unit, R(5, 5, 6, 6)) is None

    def test_hull(self, rng):
        pts = rng.normal(size=(200, 2))
        h = convex_hull(pts)
        assert polygon_area(h) > 0
        assert points_in_convex(pts[:, 0], pts[:, 1], h).all()

    def test_classify(self):
        tri = np.array([[0, 0], [10, 0], [5, 10]], float)
        assert classify_rect_vs_polygon(R(4.9, 3.2, 5.1, 3.4), tri) is Relation.INSIDE
        assert classify_rect_vs_polygon(R(20, 20, 21, 21), tri) is Relation.OUTSIDE
        assert classify_rect_vs_polygon(R(4, -1, 6, 1), tri) is Relation.PARTIAL

    def test_classify_matches_vectorized(self, rng):
        poly = convex_hull(rng.uniform(0, 10, (12, 2)))
        for _ in range(300):
            x, y = rng.uniform(-2, 12, 2)
            s = rng.uniform(0.1, 3)
            r = R(x, y, x + s, y + s)
            v = blocks_vs_convex(np.array([r.xmin]), np.array([r.ymin]), np.array([r.xmax]), np.array([r.ymax]), poly)[0]
            want = {Relation.OUTSIDE: 0, Relation.INSIDE: 1, Relation.PARTIAL: 2}[classify_rect_vs_polygon(r, poly)]
            assert v == want


class TestWedge:
    def test_full(self):
        assert wedge_classify(R(-5, -5, 5, 5), Wedge(P(0, 0), 90, 360)) is Relation.INSIDE

    def test_behind(self):
        assert wedge_classify(R(-1, -11, 1, -9), Wedge(P(0, 0), 90, 120)) is Relation.OUTSIDE

    def test_arm(self):
        # the 30 degree arm of a 120 degree wedge looking up
        assert wedge_classify(R(9, 4, 10, 6), Wedge(P(0, 0), 90, 120)) is Relation.PARTIAL

    def test_corner_angle_oracle(self, rng):
        for _ in range(500):
            w = Wedge(P(0, 0), rng.uniform(0, 360), rng.uniform(10, 350))
            x, y = rng.uniform(-10, 10, 2)
            s = rng.uniform(0.1, 2)
            r = R(x, y, x + s, y + s)
            rel = wedge_classify(r, w)
            gx, gy = np.meshgrid(np.linspace(r.xmin, r.xmax, 40), np.linspace(r.ymin, r.ymax, 40))
            inside = points_in_wedge(gx.ravel(), gy.ravel(), w)
            if rel is Relation.INSIDE:
                assert inside.all()
            elif rel is Relation.OUTSIDE:
                e = 1e-6 * s
                ix, iy = np.meshgrid(np.linspace(r.xmin + e, r.xmax - e, 40), np.linspace(r.ymin + e, r.ymax - e, 40))
                assert not points_in_wedge(ix.ravel(), iy.ravel(), w).any()
            else:
                assert inside.any() or w.apex in r.corners


class TestMindist:
    def test_touching(self):
        assert mindist(R(0, 0, 1, 1), seg(1, 0, 2, 0)) == 0

    def test_point_segment(self):
        assert mindist(P(3, 4), seg(0, 0, 0, 0.0001)) == pytest.approx(math.hypot(3, 4 - 0.0001))
        assert mindist(P(3, 4), seg(0, 0, 0, 0.0001)) == pytest.approx(5.0, abs=1e-4)

    def test_axis_separation(self):
        assert mindist(R(2, 0, 3, 1), seg(0, 0, 0, 1)) == 2.0


def test_segments_hit_rects_matches_scalar(rng):
    t = seg(-1, 0, 1, 0)
    rects = [R(x, y, x + 0.5, y + 0.5) for x, y in rng.uniform(-4, 4, (8, 2))]
    rects = [r for r in rects if not segment_intersects_rect(t, r)]
    px, py = rng.uniform(-6, 6, (2, 2000))
    got = segments_hit_rects(px, py, t, rects)
    want = [any(triangle_intersects_rect(P(a, b), t, r) for r in rects) for a, b in zip(px, py)]
    assert (got == np.array(want)).all()
