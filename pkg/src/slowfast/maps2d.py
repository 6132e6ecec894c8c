"""Return map on the plane z = 0 (crossings with z decreasing).

Section coordinates are (x, y). Besides the map itself this module holds the
symbolic partition by winding and jump direction, the saddle fixed point,
continuation of its stable manifold and the search for homoclinic points.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from .core_system import Params, classify_equilibrium
from .errors import (
    CorrectionFailed,
    JacobianSingular,
    NewtonDiverged,
    NoIntersection,
    NotCaptured,
)
from .integrator import (
    Orientation,
    Outcome,
    PeriodicOrbit,
    ReturnOutcome,
    classify_capture,
    find_periodic_orbit,
    z_section,
)
from .manifolds import BranchTag, SpiralCurve, slow_manifold_section
from .parallel import pmap
from .sections import LEFT, winding_basis

T_RETURN = 600.0
SC_TURNS = 3  # fewer turns than this puts a point outside the singular region


class Map2D:
    """R on {z = 0}; the winding basis and the small cycle are computed once."""

    def __init__(self, p: Params, t_max: float = T_RETURN):
        self.p = p
        self.section = z_section(0.0, Orientation.DECREASING, t_max=t_max)
        self.basis = winding_basis(classify_equilibrium(p))
        try:
            self.gamma: PeriodicOrbit | None = find_periodic_orbit(p)
        except NotCaptured:
            self.gamma = None

    def outcome(self, q) -> ReturnOutcome:
        s = np.array([q[0], q[1], 0.0])
        return classify_capture(self.p, s, self.section, self.gamma, basis=self.basis)

    def __call__(self, q) -> np.ndarray:
        o = self.outcome(q)
        if not o.returned:
            return np.array([math.nan, math.nan])
        return np.array([o.hit.x, o.hit.y])


@lru_cache(maxsize=16)
def return_map(p: Params) -> Map2D:
    return Map2D(p)


def R2(p: Params, q) -> ReturnOutcome:
    """Outcome of the return from (q[0], q[1], 0); the hit is a 3D state with z = 0."""
    return return_map(p).outcome(q)


def _as_map(m) -> Callable:
    return return_map(m) if isinstance(m, Params) else m


# symbolic partition


class SymbolKind(Enum):
    L = "L"
    R = "R"
    B0 = "B0"
    SC = "Sc"


@dataclass(frozen=True)
class Symbol:
    kind: SymbolKind
    n: int | None = None

    def __post_init__(self):
        if self.kind in (SymbolKind.L, SymbolKind.R):
            if self.n is None or self.n < 0:
                raise ValueError("L and R symbols need a winding count n >= 0")
        elif self.n is not None:
            raise ValueError(f"{self.kind.value} carries no winding count")

    def __str__(self) -> str:
        return f"{self.kind.value}{self.n}" if self.n is not None else self.kind.value


B0 = Symbol(SymbolKind.B0)
SC = Symbol(SymbolKind.SC)


def on_rising_side(p: Params, q) -> bool:
    """True where z' > 0 on z = 0."""
    return -p.nu - p.a * q[0] - p.b * q[1] > 0.0


def classify_symbol(p: Params, q, out: ReturnOutcome, sc_turns: int = SC_TURNS) -> Symbol:
    # every non-return counts as B0: the map is undefined there
    if not out.returned:
        return B0
    st = out.stats
    if on_rising_side(p, q) or st.turns < sc_turns:
        return SC
    return Symbol(SymbolKind.L if st.jump == LEFT else SymbolKind.R, st.turns)


def symbol_of(p: Params, q, sc_turns: int = SC_TURNS) -> Symbol:
    return classify_symbol(p, q, R2(p, q), sc_turns)


class SequenceEnd(Enum):
    ENDED_IN_B0 = "EndedInB0"
    TRUNCATED = "Truncated"


@dataclass
class SymbolSequence:
    start: tuple
    word: list
    terminal: SequenceEnd
    points: list = field(default_factory=list)  # section points visited, starting with ``start``

    def __post_init__(self):
        for s in self.word[:-1]:
            if s.kind is SymbolKind.B0:
                raise ValueError("B0 may only appear as the final symbol")

    def __str__(self) -> str:
        return " ".join(str(s) for s in self.word)


def symbolic_sequence(p: Params, q, max_len: int, sc_turns: int = SC_TURNS) -> SymbolSequence:
    m = return_map(p)
    q = np.asarray(q, dtype=float)
    start = (float(q[0]), float(q[1]))
    word, pts = [], [start]
    for _ in range(max_len):
        out = m.outcome(q)
        sym = classify_symbol(p, q, out, sc_turns)
        word.append(sym)
        if sym is B0 or sym.kind is SymbolKind.B0:
            return SymbolSequence(start, word, SequenceEnd.ENDED_IN_B0, pts)
        q = np.array([out.hit.x, out.hit.y])
        pts.append((float(q[0]), float(q[1])))
    return SymbolSequence(start, word, SequenceEnd.TRUNCATED, pts)


_PC_TURNS = (3, 4, 5)


@dataclass
class GrammarReport:
    b0_not_terminal: int = 0
    sc_successor: int = 0  # after a return landing in Sc, the next symbol is outside {L/R(3..5), B0}
    l_successor: int = 0  # after L(n), the next symbol is not B0 and has fewer than min_turns turns
    transitions: int = 0
    examples: list = field(default_factory=list)

    @property
    def violations(self) -> int:
        return self.b0_not_terminal + self.sc_successor + self.l_successor


def grammar_check(words: Sequence[Sequence[Symbol]], min_turns: int = 10) -> GrammarReport:
    """Count violations of the three grammar rules across the given words.

    The Sc rule concerns points that are themselves returns, so it is
    applied from the second symbol of each word onwards.
    """
    rep = GrammarReport()
    for w in words:
        for i, s in enumerate(w):
            if s.kind is SymbolKind.B0 and i != len(w) - 1:
                rep.b0_not_terminal += 1
                rep.examples.append(("B0", [str(t) for t in w]))
            if i + 1 >= len(w):
                continue
            nxt = w[i + 1]
            rep.transitions += 1
            if s.kind is SymbolKind.SC and i >= 1:
                ok = nxt.kind is SymbolKind.B0 or (
                    nxt.kind in (SymbolKind.L, SymbolKind.R) and nxt.n in _PC_TURNS
                )
                if not ok:
                    rep.sc_successor += 1
                    rep.examples.append(("Sc", [str(t) for t in w]))
            if s.kind is SymbolKind.L:
                ok = nxt.kind is SymbolKind.B0 or (
                    nxt.kind in (SymbolKind.L, SymbolKind.R) and nxt.n >= min_turns
                )
                if not ok:
                    rep.l_successor += 1
                    rep.examples.append(("L", [str(t) for t in w]))
    return rep


def partition_grid(p: Params, grid, max_len: int = 3, sc_turns: int = SC_TURNS, threads: int | None = None):
    """Symbolic words for every node of a :class:`slowfast.sections.GridSpec`, row-major."""
    return_map(p)  # build the shared map before threads start
    nodes = grid.nodes()
    return pmap(lambda q: symbolic_sequence(p, q, max_len, sc_turns), list(nodes), threads)


# saddle fixed point


@dataclass
class SaddleData:
    location: np.ndarray
    fd_jacobian: np.ndarray
    eigenvalues: np.ndarray
    stable_dir: np.ndarray
    unstable_dir: np.ndarray
    residual: float = 0.0

    @property
    def is_saddle(self) -> bool:
        m = np.sort(np.abs(self.eigenvalues))
        return m[0] < 1.0 < m[1]

    def left_unstable(self) -> np.ndarray:
        """Row vector picking out the unstable coordinate of a displacement."""
        V = np.column_stack([self.stable_dir, self.unstable_dir])
        return np.linalg.inv(V)[1]


def fd_jacobian(f, q, Fq=None, h: float = 1e-7) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    Fq = f(q) if Fq is None else Fq
    J = np.empty((2, 2))
    for j in range(2):
        e = np.zeros(2)
        e[j] = h
        J[:, j] = (f(q + e) - Fq) / h
    return J


def _unit(v) -> np.ndarray:
    v = np.asarray(v, dtype=float).real
    v = v / np.linalg.norm(v)
    return v if v[0] > 0.0 or (v[0] == 0.0 and v[1] > 0.0) else -v


def find_saddle(m, seed, tol: float = 1e-8, max_iter: int = 50, h: float = 1e-7) -> SaddleData:
    """Damped Newton on F(q) = R(q) - q with a forward-difference Jacobian."""
    f = _as_map(m)
    q = np.asarray(seed, dtype=float)
    Fq = f(q) - q
    if not np.all(np.isfinite(Fq)):
        raise NewtonDiverged(f"seed {q} does not return")
    for _ in range(max_iter):
        r = float(np.linalg.norm(Fq))
        if r < tol:
            break
        J = fd_jacobian(f, q, Fq + q, h) - np.eye(2)
        if abs(np.linalg.det(J)) < 1e-14:
            raise JacobianSingular(f"singular Jacobian of R - id at {q}")
        step = -np.linalg.solve(J, Fq)
        lam = 1.0
        while lam > 1e-6:
            qn = q + lam * step
            Fn = f(qn) - qn
            if np.all(np.isfinite(Fn)) and np.linalg.norm(Fn) < r:
                break
            lam /= 2.0
        else:
            raise NewtonDiverged(f"no decrease along the Newton direction at {q}")
        q, Fq = qn, Fn
    else:
        raise NewtonDiverged(f"|R(q) - q| = {np.linalg.norm(Fq):.3e} after {max_iter} iterations")
    J = fd_jacobian(f, q, Fq + q, h)
    w, V = np.linalg.eig(J)
    if np.any(np.abs(w.imag) > 0.0):
        raise JacobianSingular(f"complex multipliers {w} at {q}")
    w = w.real
    i = int(np.argmin(np.abs(w)))
    return SaddleData(q, J, w, _unit(V[:, i]), _unit(V[:, 1 - i]), float(np.linalg.norm(Fq)))


# stable manifold continuation


@dataclass
class WsPolyline:
    points: np.ndarray
    residuals: np.ndarray
    segments: list  # correction segment endpoints per step
    failed_at: int | None = None

    @property
    def arclength(self) -> np.ndarray:
        seg = np.linalg.norm(np.diff(self.points, axis=0), axis=1)
        return np.concatenate([[0.0], np.cumsum(seg)])

    def rows(self) -> list[tuple]:
        return [(i, u, v, r) for i, ((u, v), r) in enumerate(zip(self.points, self.residuals))]


def continue_Ws_of_saddle(
    m,
    saddle: SaddleData,
    h: float = 2e-4,
    n_steps: int = 400,
    sign: int = 1,
    offset: float = 1e-5,
    tol: float = 1e-6,
    far: float = 0.02,
    raise_on_fail: bool = False,
) -> WsPolyline:
    """Predictor-corrector continuation of one branch of W^s of the saddle.

    Each correction bisects along a segment perpendicular to the current
    tangent on the sign of the unstable coordinate of R(y) - p. The segment
    starts at half-length 5h and is halved until both ends map back near p
    with opposite signs, which keeps it inside one smooth piece of the map.
    """
    f = _as_map(m)
    p = saddle.location
    lu = saddle.left_unstable()
    uc = lambda y: float(lu @ (f(y) - p))
    v = sign * saddle.stable_dir
    y0 = p + sign * offset * saddle.stable_dir
    pts = [y0]
    res = [float(np.linalg.norm(f(y0) - p))]
    segs = []
    for i in range(1, n_steps + 1):
        w = pts[-1] + h * v
        nrm = np.array([-v[1], v[0]])
        L = 5.0 * h
        ok = False
        while L >= h / 64.0:
            a, b = w - L * nrm, w + L * nrm
            Ra, Rb = f(a), f(b)
            fa, fb = lu @ (Ra - p), lu @ (Rb - p)
            if (
                np.isfinite(fa)
                and np.isfinite(fb)
                and np.linalg.norm(Ra - p) < far
                and np.linalg.norm(Rb - p) < far
                and fa * fb < 0.0
            ):
                ok = True
                break
            L /= 2.0
        if not ok:
            if raise_on_fail:
                raise CorrectionFailed(i)
            return WsPolyline(np.array(pts), np.array(res), segs, failed_at=i)
        segs.append((a.copy(), b.copy()))
        for _ in range(60):
            mid = 0.5 * (a + b)
            fm = uc(mid)
            if not np.isfinite(fm):
                break
            if (fm < 0.0) == (fa < 0.0):
                a, fa = mid, fm
            else:
                b = mid
        y = 0.5 * (a + b)
        r = float(np.linalg.norm(f(y) - p))
        if not r < tol:
            if raise_on_fail:
                raise CorrectionFailed(i)
            return WsPolyline(np.array(pts), np.array(res), segs, failed_at=i)
        v = (y - pts[-1]) / np.linalg.norm(y - pts[-1])
        pts.append(y)
        res.append(r)
    return WsPolyline(np.array(pts), np.array(res), segs)


# homoclinic points


@dataclass
class Intersection:
    point: np.ndarray
    angle: float  # radians in [0, pi/2]

    @property
    def transversal(self) -> bool:
        return self.angle > 1e-3


def _seg_intersect(p1, p2, q1, q2):
    d1, d2 = p2 - p1, q2 - q1
    den = d1[0] * d2[1] - d1[1] * d2[0]
    if den == 0.0:
        return None
    r = q1 - p1
    t = (r[0] * d2[1] - r[1] * d2[0]) / den
    s = (r[0] * d1[1] - r[1] * d1[0]) / den
    if 0.0 <= t <= 1.0 and 0.0 <= s <= 1.0:
        n1, n2 = np.linalg.norm(d1), np.linalg.norm(d2)
        c = abs(d1 @ d2) / (n1 * n2)
        return p1 + t * d1, math.acos(min(1.0, c))
    return None


def polyline_intersections(A: np.ndarray, B: np.ndarray) -> list[Intersection]:
    out = []
    for i in range(len(A) - 1):
        lo = np.minimum(A[i], A[i + 1])
        hi = np.maximum(A[i], A[i + 1])
        for j in range(len(B) - 1):
            if np.any(np.maximum(B[j], B[j + 1]) < lo) or np.any(np.minimum(B[j], B[j + 1]) > hi):
                continue
            hit = _seg_intersect(A[i], A[i + 1], B[j], B[j + 1])
            if hit is not None:
                out.append(Intersection(hit[0], hit[1]))
    return out


def neighborhood_grid(center, half_widths=(2e-3, 2e-3), n: int = 30) -> np.ndarray:
    hx, hy = half_widths
    xs = np.linspace(center[0] - hx, center[0] + hx, n)
    ys = np.linspace(center[1] - hy, center[1] + hy, n)
    return np.array([(x, y) for y in ys for x in xs])


@dataclass
class ImageCloud:
    """R(U) on a grid, projected onto a reference curve."""

    images: np.ndarray  # (n*n, 2), nan where the map is undefined
    arclength: np.ndarray  # projection parameter per image (nan if undefined)
    distance: np.ndarray  # distance of each image to the curve (nan if undefined)
    ranges: list  # covered arclength intervals

    @property
    def finite(self) -> np.ndarray:
        return self.images[np.all(np.isfinite(self.images), axis=1)]

    @property
    def extent(self) -> float:
        P = self.finite
        return float(np.max(np.ptp(P, axis=0))) if len(P) else 0.0

    def thickness_ratio(self) -> float:
        """Median distance to the reference curve over the extent of the cloud."""
        d = self.distance[np.isfinite(self.distance)]
        ext = self.extent
        return float(np.median(d)) / ext if len(d) and ext > 0.0 else math.inf

    def near_fraction(self, near: float = 1e-4) -> float:
        d = self.distance[np.isfinite(self.distance)]
        return float(np.mean(d < near)) if len(d) else 0.0


def project_cloud(images: np.ndarray, n: int, curve: SpiralCurve, near: float = 1e-4,
                  max_ds: float = 1e-2) -> ImageCloud:
    """Project grid images onto ``curve`` and collect the arclength intervals
    covered by images of neighboring grid nodes.

    Two grid neighbors whose images both lie within ``near`` of the curve and
    at most ``max_ds`` apart along it are taken to span the curve between
    them. Images away from the traced curve cover nothing.
    """
    m = len(images)
    s = np.full(m, np.nan)
    d = np.full(m, np.nan)
    for i, q in enumerate(images):
        if np.all(np.isfinite(q)):
            s[i], d[i] = curve.project(q)
    ok = np.isfinite(d) & (d < near)
    iv = []
    for r in range(n):
        for c in range(n):
            i = r * n + c
            for j in ((i + 1) if c + 1 < n else None, (i + n) if r + 1 < n else None):
                if j is not None and ok[i] and ok[j] and abs(s[i] - s[j]) <= max_ds:
                    iv.append((min(s[i], s[j]), max(s[i], s[j])))
    iv.sort()
    ranges = []
    for lo, hi in iv:
        if ranges and lo <= ranges[-1][1]:
            ranges[-1] = (ranges[-1][0], max(ranges[-1][1], hi))
        else:
            ranges.append((lo, hi))
    return ImageCloud(np.asarray(images, dtype=float), s, d, ranges)


def curve_piece(curve: SpiralCurve, s0: float, s1: float) -> np.ndarray:
    """Sub-polyline of ``curve`` between arclengths s0 <= s1, endpoints interpolated."""
    S, P = curve.arclength, curve.points

    def at(s):
        k = int(np.clip(np.searchsorted(S, s) - 1, 0, len(S) - 2))
        L = S[k + 1] - S[k]
        t = 0.0 if L == 0.0 else (s - S[k]) / L
        return P[k] + t * (P[k + 1] - P[k])

    inner = P[(S > s0) & (S < s1)]
    return np.vstack([at(s0), inner, at(s1)])


@dataclass
class HomoclinicReport:
    intersections: list
    cloud: ImageCloud
    U: np.ndarray


def homoclinic_check(
    m,
    saddle: SaddleData,
    ws: WsPolyline,
    spiral: SpiralCurve,
    half_widths=(2e-3, 2e-3),
    n: int = 30,
    exclude: float = 1e-3,
    max_gap: float = 1e-3,
    threads: int | None = None,
) -> HomoclinicReport:
    """Transversal intersections of R(U) with the continued stable manifold.

    R(U) is nearly one-dimensional and lies along the attracting spiral, so
    it is represented by the pieces of the spiral covered by images of
    neighboring grid nodes (see :func:`project_cloud`).
    Intersections within ``exclude`` of the saddle are the saddle itself and
    are dropped.
    """
    f = _as_map(m)
    U = neighborhood_grid(saddle.location, half_widths, n)
    imgs = np.array(pmap(f, list(U), threads))
    cloud = project_cloud(imgs, n, spiral)
    found = []
    for s0, s1 in cloud.ranges:
        if s1 <= s0:
            continue
        piece = curve_piece(spiral, s0, s1)
        # jumps between arcs of the spiral are not part of the curve
        cuts = np.where(np.linalg.norm(np.diff(piece, axis=0), axis=1) > max_gap)[0]
        for sub in np.split(piece, cuts + 1):
            if len(sub) < 2:
                continue
            for hit in polyline_intersections(sub, ws.points):
                if np.linalg.norm(hit.point - saddle.location) > exclude:
                    found.append(hit)
    if not found:
        raise NoIntersection("R(U) does not meet the continued stable manifold")
    return HomoclinicReport(found, cloud, U)


def attracting_spiral(p: Params, t_max: float = 100.0, threads: int | None = None) -> SpiralCurve:
    return slow_manifold_section(
        p, BranchTag.ATTRACTING_PLUS, z_section(0.0, Orientation.DECREASING, t_max=t_max), threads=threads
    )


def repelling_spiral(p: Params, t_max: float = 20.0, threads: int | None = None) -> SpiralCurve:
    return slow_manifold_section(
        p, BranchTag.REPELLING, z_section(0.0, Orientation.DECREASING, t_max=t_max), threads=threads
    )
