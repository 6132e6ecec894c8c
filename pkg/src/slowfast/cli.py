"""Command-line entry point: ``slowfast <experiment> [options]``.

Exit codes: 0 success, 1 configuration error, 2 bisection predicate not
bracketed, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import hashlib
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import SCHEMA, RunConfig, load, parse
from .errors import ConfigError, NumericalFailure, PredicateNotBracketed, SlowFastError
from .io import csv_text, json_text, write_text_atomic

EXIT_OK, EXIT_CONFIG, EXIT_BRACKET, EXIT_NUMERICAL = 0, 1, 2, 3


def _nan_breaks(points: np.ndarray, max_gap: float) -> np.ndarray:
    """Insert nan rows where consecutive points jump, so plots do not bridge arcs."""
    if len(points) < 2:
        return points
    out = [points[0]]
    for a, b in zip(points[:-1], points[1:]):
        if np.linalg.norm(b - a) > max_gap:
            out.append(np.array([np.nan, np.nan]))
        out.append(b)
    return np.array(out)


class Artifacts:
    def __init__(self, formats):
        self.formats = set(formats)
        self.files: dict[str, str] = {}
        self.summary: dict = {}

    def csv(self, name, header, rows):
        if "csv" in self.formats:
            self.files[name] = csv_text(header, rows)

    def svg(self, name, dataset, style):
        if "svg" in self.formats:
            from .svg import emit_svg

            self.files[name] = emit_svg(dataset, style)


# experiments


def run_equilibrium(cfg: RunConfig, art: Artifacts):
    from .core_system import classify_equilibrium, vector_field

    info = classify_equilibrium(cfg.params)
    loc = info.location
    art.summary.update(
        location=[loc.x, loc.y, loc.z],
        residual=float(np.linalg.norm(vector_field(cfg.params, loc))),
        eigenvalues=[complex(l) for l in info.eigenvalues],
        type=info.type_tag.value,
        stable_eigvec=info.stable_eigvec,
    )


def run_hopf(cfg: RunConfig, art: Artifacts):
    from .core_system import hopf_scan

    art.summary["nu_H"] = hopf_scan(cfg.params, cfg["nu_lo"], cfg["nu_hi"])


def run_tangency(cfg: RunConfig, art: Artifacts):
    from .manifolds import ManifoldSeedBand, band_returns, detect_tangency

    band = ManifoldSeedBand(cfg["x_anchor"], (cfg["z_lo"], cfg["z_hi"]), cfg["n_seeds"], cfg["offset"])
    lo, hi = detect_tangency(cfg.params, cfg["nu_lo"], cfg["nu_hi"], band, cfg["width"])
    outs = band_returns(cfg.params.with_(nu=hi), band)
    art.summary.update(bracket=[lo, hi], returned_at_upper=sum(o.returned for o in outs), band_size=len(outs))
    art.csv(
        "band.csv",
        ["z_seed", "tag"],
        [(s[2], o.tag.value) for s, o in zip(band.seeds(), outs)],
    )


def run_return_map(cfg: RunConfig, art: Artifacts):
    from .maps1d import find_fixed_points, gap_runs, return_map, sample_R

    f = return_map(cfg.params)
    S = sample_R(f, cfg["z_lo"], cfg["z_hi"], cfg["n"], levels=cfg["levels"])
    fps = find_fixed_points(S, f)
    art.summary.update(
        fixed_points=[{"z": z, "slope": s} for z, s in fps],
        gaps=[list(g) for g in gap_runs(S)],
        samples=len(S),
    )
    art.csv("samples.csv", ["z_in", "z_out", "gap_tag"],
            [(s.z_in, s.z_out if s.z_out is not None else "", s.gap.value if s.gap else "") for s in S])
    art.svg("map.svg", {"z": [s.z_in for s in S], "r": [s.value for s in S], "title": "return map"}, "map1d")


def _grid_window(cfg):
    return (cfg["u_lo"], cfg["u_hi"], cfg["v_lo"], cfg["v_hi"]), (cfg["n_u"], cfg["n_v"])


def run_basin(cfg: RunConfig, art: Artifacts):
    from .errors import NotCaptured
    from .integrator import Orientation, find_periodic_orbit, z_section
    from .maps2d import attracting_spiral, repelling_spiral
    from .sections import GridSpec, grid_sweep, sweep_rows, tangency_line, SWEEP_COLUMNS

    p = cfg.params
    window, res = _grid_window(cfg)
    try:
        gamma = find_periodic_orbit(p)
    except NotCaptured:
        gamma = None
    sec = z_section(0.0, Orientation.DECREASING, t_max=cfg["t_max"], count=cfg["count"])
    cells = grid_sweep(p, sec, GridSpec(window, res), gamma)
    tags = [c.outcome.tag.value for c in cells]
    art.summary.update(cells=len(cells), **{t: tags.count(t) for t in sorted(set(tags))})
    art.csv("grid.csv", SWEEP_COLUMNS, sweep_rows(cells))
    if "svg" in art.formats:
        a, b, mnu = tangency_line(p)
        vals = [c.outcome.stats.y_max if c.outcome.returned else math.nan for c in cells]
        curves = []
        for name, fn, col in (("attracting", attracting_spiral, "#d62728"), ("repelling", repelling_spiral, "#000000")):
            try:
                curves.append((_nan_breaks(fn(p).points, 1e-3), col))
            except NumericalFailure:
                pass
        art.svg(
            "max_height.svg",
            {"u": [c.u for c in cells], "v": [c.v for c in cells], "value": vals,
             "tangency": (a, b, mnu), "curves": curves, "title": "maximal height"},
            "heatmap",
        )


def run_partition(cfg: RunConfig, art: Artifacts):
    from .maps2d import grammar_check, partition_grid
    from .sections import GridSpec
    from .svg import PALETTE

    window, res = _grid_window(cfg)
    seqs = partition_grid(cfg.params, GridSpec(window, res), cfg["max_len"], cfg["sc_turns"])
    rep = grammar_check([s.word for s in seqs], cfg["min_turns"])
    art.summary.update(
        cells=len(seqs),
        transitions=rep.transitions,
        b0_not_terminal=rep.b0_not_terminal,
        sc_successor=rep.sc_successor,
        l_successor=rep.l_successor,
        examples=rep.examples[:20],
    )
    rows = []
    for s in seqs:
        first = s.word[0]
        rows.append((s.start[0], s.start[1], first.kind.value, "" if first.n is None else first.n, str(s)))
    art.csv("partition.csv", ["u", "v", "symbol_tag", "n", "word"], rows)
    if "svg" in art.formats:
        colors = []
        for s in seqs:
            sym = s.word[0]
            if sym.n is None:
                colors.append("#000000" if sym.kind.value == "Sc" else "#bbbbbb")
            else:
                colors.append(PALETTE[(sym.n - 3) % len(PALETTE)])
        art.svg("partition.svg", {"u": [s.start[0] for s in seqs], "v": [s.start[1] for s in seqs],
                                  "value": [0.0] * len(seqs), "colors": colors, "title": "turns partition"}, "heatmap")


def run_saddle(cfg: RunConfig, art: Artifacts):
    from .maps2d import attracting_spiral, continue_Ws_of_saddle, find_saddle, homoclinic_check, return_map

    p = cfg.params
    m = return_map(p)
    sd = find_saddle(m, (cfg["seed_u"], cfg["seed_v"]))
    ws = continue_Ws_of_saddle(m, sd, h=cfg["h"], n_steps=cfg["n_steps"])
    spiral = attracting_spiral(p)
    hw = cfg["half_width"]
    rep = homoclinic_check(m, sd, ws, spiral, (hw, hw), cfg["n_grid"])
    art.summary.update(
        saddle=sd.location,
        eigenvalues=sd.eigenvalues,
        residual=sd.residual,
        ws_points=len(ws.points),
        ws_failed_at=ws.failed_at,
        thickness_ratio=rep.cloud.thickness_ratio(),
        intersections=[{"u": h.point[0], "v": h.point[1], "angle": h.angle, "transversal": h.transversal}
                       for h in rep.intersections],
    )
    art.csv("ws.csv", ["i", "u", "v", "correction_residual"], ws.rows())
    art.csv("intersections.csv", ["u", "v", "angle"], [(h.point[0], h.point[1], h.angle) for h in rep.intersections])
    art.svg(
        "homoclinic.svg",
        {
            "curves": [(_nan_breaks(spiral.points, 1e-3), "#d62728"), (ws.points, "#000000")],
            "points": [(rep.U, "#1f4fd1"), (rep.cloud.finite, "#ff7f0e"),
                       ([h.point for h in rep.intersections], "#d01fb4"), ([sd.location], "#2ca02c")],
            "title": "saddle, W^s and R(U)",
        },
        "curves",
    )


def run_saddle_node(cfg: RunConfig, art: Artifacts):
    from .maps1d import saddle_node_scan

    lo, hi = saddle_node_scan(cfg.params, cfg["nu_lo"], cfg["nu_hi"], (cfg["z_lo"], cfg["z_hi"]), cfg["n"], cfg["width"])
    art.summary["bracket"] = [lo, hi]


def run_diagram(cfg: RunConfig, art: Artifacts):
    from .maps1d import doubling_sequence, orbit_diagram, periodic_windows

    rows = orbit_diagram(cfg.params, cfg["nu_lo"], cfg["nu_hi"], cfg["n_nu"], cfg["transient"], cfg["keep"])
    out = []
    for r in rows:
        for i, v in enumerate(r.values):
            out.append((r.nu, i, v))
        if r.escaped_at is not None:
            out.append((r.nu, r.escaped_at, "escaped"))
    art.csv("diagram.csv", ["nu", "iterate_index", "value"], out)
    art.summary.update(
        windows=[{"period": w.period, "nu_lo": w.nu_lo, "nu_hi": w.nu_hi} for w in periodic_windows(rows)],
        doublings=doubling_sequence(rows),
    )
    pts = [(r.nu, v) for r in rows for v in r.values]
    if pts:
        art.svg("diagram.svg", {"nu": [a for a, _ in pts], "value": [b for _, b in pts], "title": "orbit diagram"},
                "diagram")


def run_critical(cfg: RunConfig, art: Artifacts):
    from .maps1d import critical_itinerary, find_critical_point, return_map, tune_nu_for_critical_closure

    nu, res = tune_nu_for_critical_closure(cfg.params, cfg["nu_lo"], cfg["nu_hi"], cfg["n_scan"])
    if not math.isfinite(nu):
        raise NumericalFailure("critical orbit undefined across the whole bracket")
    f = return_map(cfg.params.with_(nu=nu))
    c = find_critical_point(f)
    orb = critical_itinerary(f, c, cfg["max_iter"])
    centers, counts = orb.histogram(cfg["bins"])
    art.summary.update(nu_star=nu, residual=res, critical_point=c, length=len(orb.iterates), terminal=orb.terminal.value)
    art.csv("itinerary.csv", ["index", "z"], list(enumerate(orb.iterates)))
    art.csv("histogram.csv", ["bin_center", "count"], list(zip(centers, counts)))
    if len(orb.iterates):
        z = np.concatenate([[c], orb.iterates[:-1]])
        art.svg("itinerary.svg", {"z": z, "r": orb.iterates, "title": "critical orbit"}, "map1d")


EXPERIMENTS = {
    "equilibrium": run_equilibrium,
    "hopf-scan": run_hopf,
    "tangency-scan": run_tangency,
    "return-map-1d": run_return_map,
    "basin-grid": run_basin,
    "winding-partition": run_partition,
    "saddle-and-homoclinic": run_saddle,
    "saddle-node-scan": run_saddle_node,
    "orbit-diagram": run_diagram,
    "critical-orbit": run_critical,
}
assert set(EXPERIMENTS) == set(SCHEMA)


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def execute(cfg: RunConfig) -> dict:
    """Run one experiment, write its files and manifest; returns the manifest."""
    t0 = time.perf_counter()
    art = Artifacts(cfg.formats)
    EXPERIMENTS[cfg.experiment](cfg, art)
    out = Path(cfg.output_dir)
    if "json" in cfg.formats:
        art.files["summary.json"] = json_text(art.summary)
    art.files["config.cfg"] = cfg.to_text()
    listed = []
    for name in sorted(art.files):
        path = write_text_atomic(out / name, art.files[name])
        listed.append({"path": name, "sha256": sha256(path)})
    manifest = {
        "config": cfg.echo(),
        "files": listed,
        "duration_s": time.perf_counter() - t0,
        "version": __version__,
        "summary": art.summary,
    }
    write_text_atomic(out / "manifest.json", json_text(manifest))
    return manifest


def verify_manifest(directory) -> bool:
    import json

    d = Path(directory)
    man = json.loads((d / "manifest.json").read_text(encoding="utf-8"))
    return all((d / f["path"]).is_file() and sha256(d / f["path"]) == f["sha256"] for f in man["files"])


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="slowfast", description="Return-map analyses of a slow-fast system.")
    ap.add_argument("experiment", choices=sorted(EXPERIMENTS))
    ap.add_argument("--config", metavar="PATH")
    ap.add_argument("--set", metavar="KEY=VALUE", action="append", default=[], dest="overrides")
    ap.add_argument("--output", metavar="DIR")
    ap.add_argument("--formats", metavar="LIST", help="comma-separated subset of csv,json,svg")
    ap.add_argument("--threads", type=int, metavar="N")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = list(args.overrides)
    if args.output:
        overrides.append(f"output={args.output}")
    if args.formats:
        overrides.append(f"formats={args.formats}")
    try:
        if args.threads is not None:
            if args.threads < 1:
                raise ConfigError("must be a positive integer", key="--threads")
            os.environ["SLOWFAST_THREADS"] = str(args.threads)
        if args.config:
            cfg = load(args.config, overrides, args.experiment)
        else:
            cfg = parse("", overrides, args.experiment)
    except (ConfigError, OSError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        manifest = execute(cfg)
    except PredicateNotBracketed as e:
        print(f"predicate not bracketed: {e}", file=sys.stderr)
        return EXIT_BRACKET
    except NumericalFailure as e:
        print(f"numerical failure: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    except SlowFastError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    print(json_text(manifest["summary"]), end="")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
