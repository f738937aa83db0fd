"""Command line entry point: ``vcmap <command> [options]``."""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np

from .baseline import OracleReference, baseline_vcm, measured_error
from .builder import build_vcm, incremental_update, precompute_360, viewer_centric_setup
from .geometry import Point, Segment
from .metric import Target, d_max
from .partition import build_cells, error_bound_mbr, error_bound_tangential
from .quadtree import QuerySpace
from .render import render
from .rtree import bulk_load, write_obstacles_csv
from .scene import DEMO_CONFIG, RunConfig, Scene, demo_obstacles, env_seed, generate, ingest

SWEEPS = {
    "mu": ("mu_arcmin", [1, 2, 4, 8, 16]),
    "theta": ("theta_multiplier", [1, 2, 4, 8, 16]),
    "aq": ("area_fraction", [0.05, 0.10, 0.15, 0.20, 0.25]),
    "lt": ("target_length_fraction", [0.05, 0.10, 0.15, 0.20, 0.25]),
    "fov": ("fov_deg", [60, 120, 180, 240, 300, 360]),
    "ds": (None, [5000, 10000, 15000, 20000, 25000]),
}
SWEEP_COLUMNS = ("value", "time_s", "node_accesses_obstacle", "node_accesses_color",
                 "leaves_colored", "leaves_obstructed", "error")


class InfeasibleRun(RuntimeError):
    pass


def _floats(s: str, n: int) -> tuple[float, ...]:
    try:
        v = tuple(float(x) for x in s.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected {n} comma-separated numbers") from None
    if len(v) != n:
        raise argparse.ArgumentTypeError(f"expected {n} comma-separated numbers")
    return v


def _scene_options(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("scene and configuration")
    g.add_argument("--obstacles", type=Path, help="obstacle CSV (default: the bundled demo scene)")
    g.add_argument("--no-normalize", action="store_true", help="use obstacle coordinates as given")
    g.add_argument("--preset", choices=("demo", "full"), default="demo",
                   help="demo: short target, near point 1000; full: RunConfig defaults (1500 unit target)")
    g.add_argument("--mu", type=float, help="angular resolution in arcminutes")
    g.add_argument("--theta-mult", type=float, help="multiplier on the minimum block side")
    g.add_argument("--aq", type=float, help="query space area as a fraction of the data space")
    g.add_argument("--fov", type=float, help="field of view in degrees")
    g.add_argument("--lt", type=float, help="target length as a fraction of the data span")
    g.add_argument("--d0", type=float, help="near point distance")
    g.add_argument("--gaze", type=float, help="gaze direction in degrees")
    g.add_argument("--grid-n", type=int, help="baseline grid cells per side")
    g.add_argument("--seed", type=int, help="random seed (VCM_SEED overrides the default)")
    g.add_argument("--inside-nearpoint", choices=("clamp", "zero"))
    g.add_argument("--target", type=lambda s: _floats(s, 4), metavar="X0,Y0,X1,Y1",
                   help="explicit target endpoints")
    g.add_argument("--max-leaves", type=float, default=16e6,
                   help="refuse runs whose estimated quadtree size exceeds this")


def config_from_args(a) -> RunConfig:
    cfg = DEMO_CONFIG if a.preset == "demo" else RunConfig()
    over = {"mu_arcmin": a.mu, "theta_multiplier": a.theta_mult, "area_fraction": a.aq,
            "fov_deg": a.fov, "target_length_fraction": a.lt, "d0": a.d0, "gaze_deg": a.gaze,
            "grid_n": getattr(a, "grid_n", None), "inside_nearpoint": a.inside_nearpoint}
    over = {k: v for k, v in over.items() if v is not None}
    over["seed"] = a.seed if a.seed is not None else env_seed(cfg.seed)
    if getattr(a, "variant", None) and a.variant != "baseline":
        over["variant"] = a.variant
    return cfg.with_(**over)


def scene_from_args(a, cfg: RunConfig) -> Scene:
    obs = ingest(a.obstacles, normalize=not a.no_normalize) if a.obstacles else demo_obstacles()
    return _scene(cfg, obs, a.target)


def _scene(cfg: RunConfig, obs, endpoints=None) -> Scene:
    if endpoints:
        x0, y0, x1, y1 = endpoints
        t = Target(Segment(Point(x0, y0), Point(x1, y1)))
    else:
        t = cfg.target()
    return Scene.assemble(obs, t, cfg.space())


def _cells(sc: Scene, cfg: RunConfig, max_leaves: float):
    vp = cfg.vision()
    cs = build_cells(sc.target, vp, max_radius=sc.space.max_distance(sc.target.midpoint))
    theta = cs.theta * cfg.theta_multiplier
    m = cs.main
    # quadtree leaves concentrate along cell boundaries, about one per theta of boundary
    boundary = np.sum((cs.d_hi - cs.d_lo)[m] + (cs.d_hi * np.radians(cs.g_hi - cs.g_lo))[m])
    est = boundary / theta
    if est > max_leaves:
        raise InfeasibleRun(f"estimated {est:.3g} quadtree leaves exceeds --max-leaves={max_leaves:.3g}; "
                            "raise mu, theta or the near point, or shorten the target")
    return cs


def _build(sc: Scene, cfg: RunConfig, variant: str, max_leaves: float, idx=None):
    if variant == "baseline":
        t0 = time.perf_counter()
        g = baseline_vcm(sc.space, sc.target, cfg.vision(), sc.rects, cfg.grid_n)
        return g, {"grid_n": cfg.grid_n, "elapsed_s": round(time.perf_counter() - t0, 6)}
    cs = _cells(sc, cfg, max_leaves)
    if idx is None and sc.obstacles:
        idx = bulk_load(sc.obstacles, cfg.page_size)
    m = build_vcm(sc.space, sc.target, cfg.vision(), idx, variant, cfg.theta_multiplier, cells=cs)
    return m, m.stats


def _print_stats(m, stats, out) -> None:
    if hasattr(m, "stats_lines"):
        lines = m.stats_lines()
        lines += [f"{k}={stats[k]}" for k in ("obstacles_emitted", "obstacles_pruned", "theta") if k in stats]
    else:
        lines = [f"{k}={v}" for k, v in stats.items()]
    for ln in lines:
        print(ln, file=out)


def _write_outputs(m, a, out) -> None:
    if getattr(a, "out", None):
        with open(a.out, "w", newline="") as fh:
            m.to_csv(fh)
        print(f"csv={a.out}", file=out)
    if getattr(a, "pgm", None):
        Path(a.pgm).write_bytes(render(m, a.px))
        print(f"pgm={a.pgm}", file=out)


# --------------------------------------------------------------------------
# commands


def cmd_ingest(a, out):
    obs = ingest(a.path, normalize=not a.no_normalize)
    with open(a.out, "w", newline="") as fh:
        write_obstacles_csv(fh, obs)
    print(f"obstacles={len(obs)}", file=out)


def cmd_generate(a, out):
    seed = a.seed if a.seed is not None else env_seed(0)
    obs = generate(a.n, a.distribution, seed)
    with open(a.out, "w", newline="") as fh:
        write_obstacles_csv(fh, obs)
    print(f"obstacles={len(obs)}", file=out)


def cmd_partition(a, out):
    cfg = config_from_args(a)
    sc = scene_from_args(a, cfg)
    vp = cfg.vision()
    cs = _cells(sc, cfg, a.max_leaves)
    if a.out:
        with open(a.out, "w", newline="") as fh:
            cs.to_csv(fh)
    within = sc.space.max_distance(sc.target.midpoint)
    print(f"cells={int(cs.main.sum())}", file=out)
    print(f"rings={len(cs.radii) - 1}", file=out)
    print(f"d_max={d_max(sc.target.length_S, vp.mu_arcmin)}", file=out)
    print(f"theta={cs.theta}", file=out)
    print(f"E_MBR={error_bound_mbr(cs, vp, within)}", file=out)
    print(f"E_Tangent={error_bound_tangential(cs, vp, within)}", file=out)


def cmd_vcm(a, out):
    cfg = config_from_args(a)
    sc = scene_from_args(a, cfg)
    m, stats = _build(sc, cfg, a.variant, a.max_leaves)
    _print_stats(m, stats, out)
    _write_outputs(m, a, out)


def cmd_viewer(a, out):
    cfg = config_from_args(a)
    obs = ingest(a.obstacles, normalize=not a.no_normalize) if a.obstacles else demo_obstacles()
    vp = cfg.vision()
    q = viewer_centric_setup(Point(*a.at), vp, a.dmax, a.orientation)
    # the map only matters within dmax of the viewer unless a query space is asked for
    space = cfg.space() if a.aq is not None else QuerySpace.centered(q.q, 2 * a.dmax)
    sc = Scene.assemble(obs, q.derived_target, space)
    # the derived target is tiny; keep the near point inside the perceptible range
    vcfg = cfg.with_(d0=min(vp.d0, a.dmax / 2))
    cs = _cells(sc, vcfg, a.max_leaves)
    idx = bulk_load(sc.obstacles, cfg.page_size) if sc.obstacles else None
    m = build_vcm(sc.space, sc.target, vcfg.vision(), idx, cfg.variant, cfg.theta_multiplier, cells=cs)
    print(f"target_length={q.derived_target.length_S}", file=out)
    _print_stats(m, m.stats, out)
    _write_outputs(m, a, out)


def cmd_gaze(a, out):
    cfg = config_from_args(a)
    sc = scene_from_args(a, cfg)
    _cells(sc, cfg.with_(fov_deg=360.0), a.max_leaves)
    idx = bulk_load(sc.obstacles, cfg.page_size) if sc.obstacles else None
    t0 = time.perf_counter()
    pre = precompute_360(sc.space, sc.target, cfg.vision(), idx, cfg.variant, cfg.theta_multiplier)
    print(f"precompute_s={round(time.perf_counter() - t0, 6)}", file=out)
    print(f"precompute_leaves={len(pre.tree)}", file=out)
    for g in a.set or []:
        m = incremental_update(pre, g, cfg.fov_deg)
        print(f"gaze={g}", file=out)
        _print_stats(m, m.stats, out)
        if a.out:
            p = Path(a.out)
            with open(p.with_name(f"{p.stem}_gaze{g:g}{p.suffix}"), "w", newline="") as fh:
                m.to_csv(fh)


def cmd_compare(a, out):
    cfg = config_from_args(a)
    sc = scene_from_args(a, cfg)
    cand, _ = _build(sc, cfg, a.variant, a.max_leaves)
    if a.reference == "oracle":
        ref = OracleReference.build(sc.space, sc.target, cfg.vision(), sc.rects, a.reference_n)
    else:
        ref, _ = _build(sc, cfg, "exact", a.max_leaves)
    rep = measured_error(ref, cand, a.mode)
    print(f"reference={a.reference}", file=out)
    print(f"candidate={a.variant}", file=out)
    print(f"mode={rep.mode}", file=out)
    print(f"error={rep.error_fraction}", file=out)
    print(f"pieces={rep.pieces}", file=out)


def cmd_render(a, out):
    cfg = config_from_args(a)
    sc = scene_from_args(a, cfg)
    m, _ = _build(sc, cfg, a.variant, a.max_leaves)
    Path(a.pgm).write_bytes(render(m, a.px))
    print(f"pgm={a.pgm}", file=out)


def sweep(base: RunConfig, param: str, obstacles, endpoints=None, error_n: int = 0,
          max_leaves: float = 16e6, values=None) -> list[dict]:
    """One pipeline run per value of ``param``; returns the results table rows."""
    field_name, default_values = SWEEPS[param]
    values = list(values if values is not None else default_values)
    if param == "ds":
        # nested scenes: every size is a prefix of one draw, so a larger
        # scene only adds obstacles to a smaller one
        pool = generate(int(max(values)), "uniform", base.seed)
    rows = []
    for v in values:
        if param == "ds":
            cfg = base
            obs = pool[:int(v)]
        else:
            cfg = base.with_(**{field_name: v})
            obs = obstacles
        sc = _scene(cfg, obs, endpoints)
        idx = bulk_load(sc.obstacles, cfg.page_size) if sc.obstacles else None
        t0 = time.perf_counter()
        try:
            m, st = _build(sc, cfg, cfg.variant, max_leaves, idx=idx)
        except InfeasibleRun as e:
            # keep the table rectangular; the value is reported as skipped
            print(f"vcmap: skipping {param}={v}: {e}", file=sys.stderr)
            rows.append(dict({c: float("nan") for c in SWEEP_COLUMNS}, value=v))
            continue
        elapsed = time.perf_counter() - t0
        err = float("nan")
        if error_n:
            ref = OracleReference.build(sc.space, sc.target, cfg.vision(), sc.rects, error_n)
            err = measured_error(ref, m).error_fraction
        rows.append({"value": v, "time_s": round(elapsed, 6),
                     "node_accesses_obstacle": st["node_accesses_obstacle"],
                     "node_accesses_color": st["node_accesses_color"],
                     "leaves_colored": st["leaves_colored"],
                     "leaves_obstructed": st["leaves_obstructed"], "error": err})
    return rows


def cmd_sweep(a, out):
    cfg = config_from_args(a)
    obs = ingest(a.obstacles, normalize=not a.no_normalize) if a.obstacles else demo_obstacles()
    rows = sweep(cfg, a.param, obs, a.target, a.error_n, a.max_leaves)
    print(",".join(("param",) + SWEEP_COLUMNS), file=out)
    for r in rows:
        print(",".join([a.param] + [str(r[c]) for c in SWEEP_COLUMNS]), file=out)
    if a.out:
        with open(a.out, "w") as fh:
            fh.write(",".join(("param",) + SWEEP_COLUMNS) + "\n")
            for r in rows:
                fh.write(",".join([a.param] + [str(r[c]) for c in SWEEP_COLUMNS]) + "\n")


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vcmap", description="Visibility color maps around a target segment.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("ingest", help="normalize an obstacle CSV into the 10,000 unit data space")
    s.add_argument("path", type=Path)
    s.add_argument("--out", required=True)
    s.add_argument("--no-normalize", action="store_true")
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("generate", help="write a synthetic obstacle CSV")
    s.add_argument("--n", type=int, default=5000)
    s.add_argument("--distribution", choices=("uniform", "zipf"), default="uniform")
    s.add_argument("--seed", type=int)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_generate)

    s = sub.add_parser("partition", help="dump equi-visible cells, theta and error bounds")
    _scene_options(s)
    s.add_argument("--out", help="cell CSV")
    s.set_defaults(func=cmd_partition)

    def outputs(s):
        s.add_argument("--out", help="map CSV")
        s.add_argument("--pgm", help="write a PGM rendering")
        s.add_argument("--px", type=int, default=512)

    s = sub.add_parser("vcm", help="build a visibility color map")
    _scene_options(s)
    s.add_argument("--variant", choices=("exact", "mbr", "tangent", "baseline"), default="exact")
    outputs(s)
    s.set_defaults(func=cmd_vcm)

    s = sub.add_parser("viewer", help="viewer-centric map around a viewpoint")
    _scene_options(s)
    s.add_argument("--at", type=lambda v: _floats(v, 2), required=True, metavar="X,Y")
    s.add_argument("--dmax", type=float, default=1000.0, help="distance at which the viewer stops mattering")
    s.add_argument("--orientation", choices=("perpendicular", "along"), default="perpendicular")
    s.add_argument("--variant", choices=("exact", "mbr", "tangent"), default="exact")
    outputs(s)
    s.set_defaults(func=cmd_viewer)

    s = sub.add_parser("gaze", help="precompute a full-circle map, then change gaze incrementally")
    _scene_options(s)
    s.add_argument("--precompute", action="store_true", help="build the 360 degree map (always done)")
    s.add_argument("--set", type=float, action="append", metavar="DEG", help="gaze to derive (repeatable)")
    s.add_argument("--variant", choices=("exact", "mbr", "tangent"), default="exact")
    s.add_argument("--out", help="CSV path; one file per gaze with a _gazeDEG suffix")
    s.set_defaults(func=cmd_gaze)

    s = sub.add_parser("compare", help="measured error of a map against a reference")
    _scene_options(s)
    s.add_argument("--reference", choices=("oracle", "exact"), default="oracle")
    s.add_argument("--variant", choices=("exact", "mbr", "tangent", "baseline"), default="exact")
    s.add_argument("--mode", choices=("area_weighted_abs", "area_weighted_signed"), default="area_weighted_abs")
    s.add_argument("--reference-n", type=int, default=1024, help="oracle raster side")
    s.set_defaults(func=cmd_compare)

    s = sub.add_parser("render", help="render a map as a binary PGM")
    _scene_options(s)
    s.add_argument("--variant", choices=("exact", "mbr", "tangent", "baseline"), default="exact")
    s.add_argument("--pgm", required=True)
    s.add_argument("--px", type=int, default=512)
    s.set_defaults(func=cmd_render)

    s = sub.add_parser("sweep", help="run the pipeline across one parameter axis")
    _scene_options(s)
    s.add_argument("--param", choices=tuple(SWEEPS), required=True)
    s.add_argument("--variant", choices=("exact", "mbr", "tangent"), default="exact")
    s.add_argument("--error-n", type=int, default=0, help="oracle raster side for an error column (0: skip)")
    s.add_argument("--out", help="results CSV")
    s.set_defaults(func=cmd_sweep)
    return p


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    a = build_parser().parse_args(argv)
    try:
        a.func(a, out)
    except (InfeasibleRun, ValueError, OSError) as e:
        print(f"vcmap: error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
