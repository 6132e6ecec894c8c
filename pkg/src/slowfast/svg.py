"""Deterministic SVG plots: fixed canvas, fixed number formatting, no timestamps."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyDataset

W, H = 640, 480
MARGIN = 48

# perceptually ordered stops for scalar colouring (dark blue to yellow)
_RAMP = [(68, 1, 84), (59, 82, 139), (33, 145, 140), (94, 201, 98), (253, 231, 37)]
# categorical colours, first entries matching the turns legend (3 turns onwards)
PALETTE = ["#1b9e9e", "#1f4fd1", "#8c8c8c", "#2ca02c", "#d4a017", "#d01fb4", "#e6550d", "#7f3b08"]


def ramp(t: float) -> str:
    if not math.isfinite(t):
        return "#cccccc"
    t = min(1.0, max(0.0, t)) * (len(_RAMP) - 1)
    i = min(int(t), len(_RAMP) - 2)
    f = t - i
    c = [round(a + (b - a) * f) for a, b in zip(_RAMP[i], _RAMP[i + 1])]
    return "#%02x%02x%02x" % tuple(c)


def _n(v: float) -> str:
    return f"{v:.2f}"


@dataclass
class Layer:
    kind: str  # "line", "points", "cells"
    xy: np.ndarray
    color: str = "#000000"
    colors: list | None = None  # per point, for "points" and "cells"
    dashed: bool = False
    size: float = 1.5


@dataclass
class Figure:
    layers: list = field(default_factory=list)
    title: str = ""
    xlabel: str = ""
    ylabel: str = ""
    xlim: tuple | None = None
    ylim: tuple | None = None

    def add(self, layer: Layer) -> "Figure":
        self.layers.append(layer)
        return self

    def _limits(self):
        pts = [l.xy[np.all(np.isfinite(l.xy), axis=1)] for l in self.layers if len(l.xy)]
        pts = [p for p in pts if len(p)]
        if not pts:
            raise EmptyDataset("nothing to plot")
        P = np.vstack(pts)
        xl = self.xlim or (float(P[:, 0].min()), float(P[:, 0].max()))
        yl = self.ylim or (float(P[:, 1].min()), float(P[:, 1].max()))
        if xl[1] == xl[0]:
            xl = (xl[0] - 0.5, xl[1] + 0.5)
        if yl[1] == yl[0]:
            yl = (yl[0] - 0.5, yl[1] + 0.5)
        return xl, yl

    def render(self) -> str:
        (x0, x1), (y0, y1) = self._limits()
        sx = (W - 2 * MARGIN) / (x1 - x0)
        sy = (H - 2 * MARGIN) / (y1 - y0)
        X = lambda x: MARGIN + (x - x0) * sx
        Y = lambda y: H - MARGIN - (y - y0) * sy
        out = [
            f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {W} {H}" width="{W}" height="{H}">',
            f'<rect x="0" y="0" width="{W}" height="{H}" fill="#ffffff"/>',
            f'<clipPath id="plot"><rect x="{MARGIN}" y="{MARGIN}" width="{W - 2 * MARGIN}" height="{H - 2 * MARGIN}"/></clipPath>',
            '<g clip-path="url(#plot)">',
        ]
        for l in self.layers:
            xy = l.xy
            if l.kind == "line":
                ok = np.all(np.isfinite(xy), axis=1)
                # break the path at non-finite points
                runs, cur = [], []
                for keep, (x, y) in zip(ok, xy):
                    if keep:
                        cur.append(f"{_n(X(x))},{_n(Y(y))}")
                    elif cur:
                        runs.append(cur)
                        cur = []
                if cur:
                    runs.append(cur)
                dash = ' stroke-dasharray="6,4"' if l.dashed else ""
                for r in runs:
                    if len(r) > 1:
                        out.append(
                            f'<polyline fill="none" stroke="{l.color}" stroke-width="{l.size}"{dash} points="{" ".join(r)}"/>'
                        )
            elif l.kind == "points":
                for i, (x, y) in enumerate(xy):
                    if math.isfinite(x) and math.isfinite(y):
                        c = l.colors[i] if l.colors else l.color
                        out.append(f'<circle cx="{_n(X(x))}" cy="{_n(Y(y))}" r="{l.size}" fill="{c}"/>')
            elif l.kind == "cells":
                # cells on a regular grid: width from the smallest positive spacing
                ux = np.unique(xy[:, 0])
                uy = np.unique(xy[:, 1])
                dx = float(np.min(np.diff(ux))) if len(ux) > 1 else (x1 - x0)
                dy = float(np.min(np.diff(uy))) if len(uy) > 1 else (y1 - y0)
                for i, (x, y) in enumerate(xy):
                    c = l.colors[i] if l.colors else l.color
                    out.append(
                        f'<rect x="{_n(X(x - dx / 2))}" y="{_n(Y(y + dy / 2))}" width="{_n(dx * sx)}" '
                        f'height="{_n(dy * sy)}" fill="{c}"/>'
                    )
            else:
                raise ValueError(f"unknown layer kind {l.kind!r}")
        out.append("</g>")
        out.append(
            f'<rect x="{MARGIN}" y="{MARGIN}" width="{W - 2 * MARGIN}" height="{H - 2 * MARGIN}" fill="none" stroke="#000000"/>'
        )
        for v, anchor, xx, yy in (
            (f"{x0:.6g}", "start", MARGIN, H - MARGIN + 16),
            (f"{x1:.6g}", "end", W - MARGIN, H - MARGIN + 16),
        ):
            out.append(f'<text x="{xx}" y="{yy}" font-size="11" text-anchor="{anchor}">{v}</text>')
        out.append(f'<text x="{MARGIN - 4}" y="{H - MARGIN}" font-size="11" text-anchor="end">{y0:.6g}</text>')
        out.append(f'<text x="{MARGIN - 4}" y="{MARGIN + 8}" font-size="11" text-anchor="end">{y1:.6g}</text>')
        if self.xlabel:
            out.append(f'<text x="{W / 2}" y="{H - 12}" font-size="13" text-anchor="middle">{self.xlabel}</text>')
        if self.ylabel:
            out.append(f'<text x="14" y="{H / 2}" font-size="13" text-anchor="middle" transform="rotate(-90 14 {H / 2})">{self.ylabel}</text>')
        if self.title:
            out.append(f'<text x="{W / 2}" y="24" font-size="14" text-anchor="middle">{self.title}</text>')
        out.append("</svg>")
        return "\n".join(out) + "\n"


def _arr(v) -> np.ndarray:
    return np.asarray(v, dtype=float)


def emit_svg(dataset: dict, style: str) -> str:
    """Plot one of the standard datasets.

    Styles and the keys they read:
      map1d     z, r              graph of the map with the diagonal
      diagram   nu, value         orbit diagram
      heatmap   u, v, value       grid cells coloured by value; optional
                tangency=(a, b, -nu) line and curves=[(points, colour), ...]
      curves    curves, points    polylines and point sets in a section
    """
    fig = Figure(title=dataset.get("title", ""))
    if style == "map1d":
        z, r = _arr(dataset.get("z", [])), _arr(dataset.get("r", []))
        if z.size == 0:
            raise EmptyDataset("no samples")
        fig.xlabel, fig.ylabel = "z", "R(z)"
        lo, hi = float(np.nanmin(z)), float(np.nanmax(z))
        fig.xlim = (lo, hi)
        fr = r[np.isfinite(r)]
        fig.ylim = (min(lo, float(fr.min())) if fr.size else lo, max(hi, float(fr.max())) if fr.size else hi)
        fig.add(Layer("line", np.array([[lo, lo], [hi, hi]]), dashed=True))
        fig.add(Layer("points", np.column_stack([z, r]), color="#1f4fd1", size=1.2))
    elif style == "diagram":
        nu, v = _arr(dataset.get("nu", [])), _arr(dataset.get("value", []))
        if nu.size == 0:
            raise EmptyDataset("no orbit samples")
        fig.xlabel, fig.ylabel = "nu", "z"
        fig.add(Layer("points", np.column_stack([nu, v]), size=0.8))
    elif style == "heatmap":
        u, v, val = _arr(dataset.get("u", [])), _arr(dataset.get("v", [])), _arr(dataset.get("value", []))
        if u.size == 0:
            raise EmptyDataset("no grid cells")
        fig.xlabel, fig.ylabel = dataset.get("xlabel", "x"), dataset.get("ylabel", "y")
        fig.xlim = (float(u.min()), float(u.max()))
        fig.ylim = (float(v.min()), float(v.max()))
        colors = dataset.get("colors")
        if colors is None:
            fin = val[np.isfinite(val)]
            lo, hi = (float(fin.min()), float(fin.max())) if fin.size else (0.0, 1.0)
            span = hi - lo if hi > lo else 1.0
            colors = [ramp((x - lo) / span) for x in val]
        fig.add(Layer("cells", np.column_stack([u, v]), colors=list(colors)))
        if dataset.get("tangency") is not None:
            a, b, c = dataset["tangency"]  # a x + b y = c
            xs = np.array(fig.xlim)
            if b != 0.0:
                fig.add(Layer("line", np.column_stack([xs, (c - a * xs) / b]), color="#d01fb4", dashed=True))
            elif a != 0.0:
                fig.add(Layer("line", np.array([[c / a, fig.ylim[0]], [c / a, fig.ylim[1]]]), color="#d01fb4", dashed=True))
        for pts, col in dataset.get("curves", []):
            fig.add(Layer("line", _arr(pts), color=col, size=1.0))
    elif style == "curves":
        curves = dataset.get("curves", [])
        points = dataset.get("points", [])
        if not curves and not points:
            raise EmptyDataset("no curves or points")
        fig.xlabel, fig.ylabel = dataset.get("xlabel", "x"), dataset.get("ylabel", "y")
        if "xlim" in dataset:
            fig.xlim, fig.ylim = tuple(dataset["xlim"]), tuple(dataset["ylim"])
        for pts, col in curves:
            fig.add(Layer("line", _arr(pts), color=col, size=1.0))
        for pts, col in points:
            fig.add(Layer("points", _arr(pts).reshape(-1, 2), color=col, size=1.5))
    else:
        raise ValueError(f"unknown style {style!r}")
    return fig.render()
