"""Grayscale raster output (binary PGM) for color maps."""

from __future__ import annotations

import numpy as np


def raster(m, px: int) -> np.ndarray:
    """Colors of ``m`` sampled at the centers of a px x px raster, row 0 at the top."""
    if px < 16:
        raise ValueError("resolution must be at least 16 pixels")
    b = m.space.bounds if hasattr(m, "space") else m.tree.space.bounds
    s = (b.xmax - b.xmin) / px
    xs = b.xmin + (np.arange(px) + 0.5) * s
    ys = b.ymax - (np.arange(px) + 0.5) * s
    gx, gy = np.meshgrid(xs, ys)
    return np.asarray(m.colors_at(gx.ravel(), gy.ravel()), dtype=float).reshape(px, px)


def to_pgm(colors: np.ndarray) -> bytes:
    h, w = colors.shape
    g = np.floor(255.0 * np.clip(colors, 0.0, 1.0) + 0.5).astype(np.uint8)
    return b"P5\n%d %d\n255\n" % (w, h) + g.tobytes()


def render(m, px: int = 512) -> bytes:
    """Binary PGM of a VCMap or BaselineGrid; byte-identical for identical maps."""
    return to_pgm(raster(m, px))


def read_pgm(data: bytes) -> np.ndarray:
    parts = data.split(b"\n", 3)
    if parts[0] != b"P5":
        raise ValueError("not a binary PGM")
    w, h = (int(v) for v in parts[1].split())
    return np.frombuffer(parts[3], dtype=np.uint8).reshape(h, w)
