import math
from pathlib import Path

import numpy as np
import pytest

from vcmap.baseline import BaselineGrid, baseline_vcm
from vcmap.builder import build_vcm
from vcmap.quadtree import OBSTRUCTED
from vcmap.render import raster, read_pgm, render
from vcmap.rtree import bulk_load
from vcmap.scene import DEMO_CONFIG, Scene, demo_obstacles

GOLDEN = Path(__file__).parent / "data" / "demo_exact_128.pgm"


def demo_map(cfg=DEMO_CONFIG):
    sc = Scene.assemble(demo_obstacles(), cfg.target(), cfg.space())
    return build_vcm(sc.space, sc.target, cfg.vision(), bulk_load(sc.obstacles))


def test_header_and_size():
    g = BaselineGrid(DEMO_CONFIG.space(), 4, np.full((4, 4), 0.5))
    data = render(g, 16)
    assert data.startswith(b"P5\n16 16\n255\n") and len(data) == len(b"P5\n16 16\n255\n") + 256
    assert (read_pgm(data) == 128).all()   # floor(255 * 0.5 + 0.5)


def test_minimum_resolution():
    g = BaselineGrid(DEMO_CONFIG.space(), 4, np.zeros((4, 4)))
    with pytest.raises(ValueError):
        render(g, 15)


def test_row_zero_is_top():
    c = np.zeros((4, 4))
    c[3, :] = 1.0      # top row of cells (largest y)
    img = read_pgm(render(BaselineGrid(DEMO_CONFIG.space(), 4, c), 16))
    assert (img[:4] == 255).all() and (img[4:] == 0).all()


def test_all_obstructed_is_black():
    m = demo_map()
    m.tree.state[:] = OBSTRUCTED
    m.tree.color[:] = 0
    assert (read_pgm(render(m, 32)) == 0).all()


def test_obstacle_free_brightness_falls_along_rays():
    cfg = DEMO_CONFIG.with_(fov_deg=360)
    m = build_vcm(cfg.space(), cfg.target(), cfg.vision(), None)
    n = 255                      # odd, so the target midpoint sits on a pixel center
    img = read_pgm(render(m, n)).astype(int)
    ctr, s = n // 2, cfg.space().side / n
    step = math.ceil(255 * cfg.vision().mu_deg / 60 * 60 / (2 * math.degrees(math.atan(100 / 2000))))
    for a in range(1, 6):
        for b in range(1, 6):
            if math.gcd(a, b) != 1:
                continue
            for sx, sy in ((1, 1), (-1, 1), (-1, -1), (1, -1)):
                k = np.arange(1, 300)
                cx, cy = ctr + sx * a * k, ctr - sy * b * k
                ok = (cx >= 0) & (cx < n) & (cy >= 0) & (cy < n)
                v = img[cy[ok], cx[ok]]
                D = k[ok] * math.hypot(a, b) * s
                rise = np.diff(v)
                far = D[1:] > cfg.vision().d0
                # beyond the near point brightness never rises outward
                assert (rise[far] <= 0).all()
                # inside it color depends on direction only; floor blocks cut by
                # a sector edge may take the neighbouring sector's value
                assert (np.abs(rise[~far]) <= step).all()


def test_baseline_renders():
    sc = Scene.assemble(demo_obstacles(), DEMO_CONFIG.target(), DEMO_CONFIG.space())
    g = baseline_vcm(sc.space, sc.target, DEMO_CONFIG.vision(), sc.rects, 32)
    img = read_pgm(render(g, 64))
    assert np.array_equal(img[::2, ::2], np.floor(255 * g.colors[::-1] + 0.5))


def test_golden_demo_image():
    assert render(demo_map(), 128) == GOLDEN.read_bytes()
