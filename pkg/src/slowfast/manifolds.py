"""Critical manifold, slow-manifold traces on sections, and manifolds of the equilibrium.

Slow manifolds are traced by shooting: seeds placed on the critical manifold
far from the folds relax onto the nearby slow manifold (forward time for the
attracting sheets, backward time for the repelling one) and their crossings
with a section are collected. The seed parameter is refined adaptively so the
resulting polyline resolves the tightly wound spirals.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable

import numpy as np
from scipy.interpolate import CubicSpline

from . import _kernel as K
from .core_system import Params, State, classify_equilibrium
from .errors import InsufficientHits, StepSizeUnderflow, NoCrossing, NotCaptured, PredicateNotBracketed
from .integrator import (
    Direction,
    EventSpec,
    Orientation,
    Outcome,
    PeriodicOrbit,
    ReturnOutcome,
    Trajectory,
    classify_capture,
    find_periodic_orbit,
    integrate,
    run_raw,
    x_section,
    z_section,
)
from .parallel import pmap


def critical_manifold_y(x):
    return x * x + x * x * x


def fold_lines() -> tuple[float, float]:
    """x-coordinates where the critical manifold folds: roots of 2x + 3x^2."""
    return 0.0, -2.0 / 3.0


class BranchTag(Enum):
    ATTRACTING_PLUS = "AttractingPlus"
    ATTRACTING_MINUS = "AttractingMinus"
    REPELLING = "Repelling"


# seed placement per branch: (x_anchor, default seed z-range, integration direction)
_BRANCH_SEEDS = {
    BranchTag.ATTRACTING_PLUS: (0.5, (-0.8, 0.5), Direction.FORWARD),
    BranchTag.ATTRACTING_MINUS: (-1.2, (-1.5, 0.5), Direction.FORWARD),
    BranchTag.REPELLING: (-0.1, (-0.03, 0.005), Direction.BACKWARD),
}


def section_coords(ev: EventSpec, s) -> np.ndarray:
    """The two free coordinates of a point on an axis-aligned section."""
    s = np.asarray(s, dtype=float)
    keep = [i for i in range(3) if i != "xyz".index(ev.surface)]
    return s[keep]


@dataclass
class SpiralCurve:
    points: np.ndarray  # (n, 2) section coordinates
    arclength: np.ndarray
    branch_tag: BranchTag
    seeds: np.ndarray  # seed parameter per point

    def __post_init__(self):
        if len(self.points) and self.arclength[0] != 0.0:
            raise ValueError("arclength must start at 0")
        if np.any(np.diff(self.arclength) < 0.0):
            raise ValueError("arclength must be nondecreasing")

    @classmethod
    def from_points(cls, pts, branch, seeds=None) -> "SpiralCurve":
        pts = np.asarray(pts, dtype=float).reshape(-1, 2)
        seeds = np.arange(len(pts), dtype=float) if seeds is None else np.asarray(seeds, dtype=float)
        if len(pts) > 1:
            keep = np.ones(len(pts), dtype=bool)
            keep[1:] = np.any(np.diff(pts, axis=0) != 0.0, axis=1)
            pts, seeds = pts[keep], seeds[keep]
        seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
        s = np.concatenate([[0.0], np.cumsum(seg)])
        return cls(pts, s, branch, seeds)

    def pieces(self, max_gap: float) -> list[np.ndarray]:
        """Split the polyline wherever consecutive points are farther apart than ``max_gap``."""
        if len(self.points) == 0:
            return []
        gaps = np.linalg.norm(np.diff(self.points, axis=0), axis=1)
        cuts = np.where(gaps > max_gap)[0]
        out, start = [], 0
        for c in cuts:
            out.append(self.points[start : c + 1])
            start = c + 1
        out.append(self.points[start:])
        return [p for p in out if len(p) > 0]

    def project(self, q) -> tuple[float, float]:
        """(arclength, distance) of the nearest point on the polyline to ``q``."""
        q = np.asarray(q, dtype=float)
        P = self.points
        if len(P) == 1:
            return 0.0, float(np.linalg.norm(q - P[0]))
        a, b = P[:-1], P[1:]
        d = b - a
        L2 = np.einsum("ij,ij->i", d, d)
        L2[L2 == 0.0] = 1.0
        t = np.clip(np.einsum("ij,ij->i", q - a, d) / L2, 0.0, 1.0)
        foot = a + t[:, None] * d
        dist = np.linalg.norm(q - foot, axis=1)
        k = int(np.argmin(dist))
        return float(self.arclength[k] + t[k] * math.sqrt(L2[k])), float(dist[k])

    def to_csv(self, path) -> None:
        from .io import write_csv

        rows = [(s, u, v, self.branch_tag.value) for s, (u, v) in zip(self.arclength, self.points)]
        write_csv(path, ["s", "u", "v", "branch_tag"], rows)


def refine_curve(
    hit: Callable[[float], np.ndarray | None],
    params: np.ndarray,
    ds: float,
    max_levels: int = 40,
    max_points: int = 20000,
    threads: int | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Sample ``hit`` on ``params`` and bisect parameter intervals whose images are
    farther apart than ``ds``. Returns (params, points) for the successful hits."""
    vals = pmap(hit, list(params), threads)
    S = [(float(t), v) for t, v in zip(params, vals) if v is not None]
    for _ in range(max_levels):
        mids = []
        for (ta, ha), (tb, hb) in zip(S[:-1], S[1:]):
            if np.linalg.norm(ha - hb) > ds and tb - ta > 1e-15 * max(1.0, abs(ta)):
                mids.append(0.5 * (ta + tb))
        if not mids or len(S) + len(mids) > max_points:
            break
        got = pmap(hit, mids, threads)
        merged = S + [(t, v) for t, v in zip(mids, got) if v is not None]
        merged.sort(key=lambda e: e[0])
        if len(merged) == len(S):
            break
        S = merged
    if not S:
        return np.empty(0), np.empty((0, 2))
    return np.array([e[0] for e in S]), np.array([e[1] for e in S])


def slow_manifold_section(
    p: Params,
    branch: BranchTag,
    section: EventSpec,
    n_seeds: int = 400,
    z_range: tuple[float, float] | None = None,
    x_anchor: float | None = None,
    ds: float = 2e-4,
    max_levels: int = 40,
    threads: int | None = None,
) -> SpiralCurve:
    """Trace of one slow-manifold sheet on ``section``, ordered by seed z."""
    xa_default, zr_default, direction = _BRANCH_SEEDS[branch]
    xa = xa_default if x_anchor is None else x_anchor
    zlo, zhi = zr_default if z_range is None else z_range
    ya = critical_manifold_y(xa)
    prm = p.as_array()

    def hit(z0):
        try:
            r = run_raw(prm, np.array([xa, ya, z0]), section, int(direction))
        except StepSizeUnderflow:
            return None
        if r.status != K.RETURNED:
            return None
        return section_coords(section, r.last_hit)

    seeds, pts = refine_curve(hit, np.linspace(zlo, zhi, n_seeds), ds, max_levels, threads=threads)
    if len(pts) < 10:
        raise InsufficientHits(f"only {len(pts)} of the {branch.value} seeds reached the section")
    return SpiralCurve.from_points(pts, branch, seeds)


def slow_manifold_profile(
    p: Params,
    x0: float = 0.3,
    z_range: tuple[float, float] = (-0.2, 0.4),
    n_seeds: int = 300,
    x_anchor: float = 0.5,
) -> CubicSpline:
    """y on the attracting sheet along the plane x = x0, as a spline in z.

    Seeds start on the critical manifold at ``x_anchor`` and are followed down
    to their first crossing of x = x0 with x decreasing.
    """
    ya = critical_manifold_y(x_anchor)
    prm = p.as_array()
    ev = x_section(x0, Orientation.DECREASING, t_max=50.0)
    Z, Y = [], []
    for z0 in np.linspace(z_range[0], z_range[1], n_seeds):
        r = run_raw(prm, np.array([x_anchor, ya, z0]), ev)
        if r.status == K.RETURNED:
            Z.append(r.last_hit[2])
            Y.append(r.last_hit[1])
    if len(Z) < 10:
        raise InsufficientHits(f"only {len(Z)} profile seeds reached x = {x0}")
    Z = np.array(Z)
    Y = np.array(Y)
    order = np.argsort(Z)
    Z, Y = Z[order], Y[order]
    keep = np.concatenate([[True], np.diff(Z) > 1e-12])
    return CubicSpline(Z[keep], Y[keep])


@dataclass
class StableManifoldBranch:
    trajectory: Trajectory
    crossing: State
    sign: int


def stable_manifold_Ws(p: Params, offset: float = 1e-8, t_max: float = 50.0) -> StableManifoldBranch:
    """Backward branch of the 1D stable manifold reaching z = 0.

    The crossing orientation is taken along the integration, i.e. z increases
    as the backward trajectory passes through z = 0.
    """
    info = classify_equilibrium(p)
    eq = info.location.as_array()
    vs = info.stable_eigvec
    ev = z_section(0.0, Orientation.DECREASING, t_max=t_max)
    for sign in (1, -1):
        traj, out = integrate(p, eq + sign * offset * vs, Direction.BACKWARD, ev)
        if out.returned:
            return StableManifoldBranch(traj, out.hit, sign)
    raise NoCrossing("neither stable branch reaches z = 0 in backward time")


def unstable_manifold_Wu(
    p: Params,
    n_rays: int,
    ev: EventSpec,
    radius: float = 1e-6,
    gamma: PeriodicOrbit | None = None,
    threads: int | None = None,
) -> list[ReturnOutcome]:
    """Fan of forward rays from a small circle in the unstable plane."""
    info = classify_equilibrium(p)
    eq = info.location.as_array()
    u, w = info.unstable_plane
    w = w - (w @ u) * u
    w /= np.linalg.norm(w)
    angles = 2.0 * math.pi * np.arange(n_rays) / n_rays
    seeds = [eq + radius * (math.cos(t) * u + math.sin(t) * w) for t in angles]
    return pmap(lambda s: classify_capture(p, s, ev, gamma), seeds, threads)


def unstable_ray_trajectories(p: Params, n_rays: int, ev: EventSpec, radius: float = 1e-6) -> list[Trajectory]:
    info = classify_equilibrium(p)
    eq = info.location.as_array()
    u, w = info.unstable_plane
    w = w - (w @ u) * u
    w /= np.linalg.norm(w)
    out = []
    for t in 2.0 * math.pi * np.arange(n_rays) / n_rays:
        traj, _ = integrate(p, eq + radius * (math.cos(t) * u + math.sin(t) * w), Direction.FORWARD, ev)
        out.append(traj)
    return out


@dataclass(frozen=True)
class ManifoldSeedBand:
    x_anchor: float = 0.27
    z_range: tuple = (0.0, 0.3)
    n_seeds: int = 30
    offset: float = 0.0

    def __post_init__(self):
        if self.n_seeds < 2:
            raise ValueError("n_seeds must be at least 2")
        if not self.z_range[1] > self.z_range[0]:
            raise ValueError("z_range must be nondegenerate")

    def seeds(self) -> np.ndarray:
        zs = np.linspace(self.z_range[0], self.z_range[1], self.n_seeds)
        y = critical_manifold_y(self.x_anchor) + self.offset
        return np.array([[self.x_anchor, y, z] for z in zs])

    def section(self, t_max: float = 150.0) -> EventSpec:
        return x_section(self.x_anchor, Orientation.ANY, guard=0.05, t_max=t_max)


def band_returns(p: Params, band: ManifoldSeedBand, threads: int | None = None) -> list[ReturnOutcome]:
    """Classify every band member; Timeout and Captured both count as staying near the cycle."""
    try:
        gamma = find_periodic_orbit(p)
    except NotCaptured:
        gamma = None
    ev = band.section()
    return pmap(lambda s: classify_capture(p, s, ev, gamma), list(band.seeds()), threads)


def count_returns(p: Params, band: ManifoldSeedBand, threads: int | None = None) -> int:
    return sum(o.tag is Outcome.RETURNED for o in band_returns(p, band, threads))


def detect_tangency(
    p_base: Params,
    nu_lo: float = 0.00640,
    nu_hi: float = 0.00655,
    band: ManifoldSeedBand = ManifoldSeedBand(),
    width: float = 1e-5,
    threads: int | None = None,
) -> tuple[float, float]:
    """Bisect on nu for the first global return among the band trajectories."""
    n_lo = count_returns(p_base.with_(nu=nu_lo), band, threads)
    n_hi = count_returns(p_base.with_(nu=nu_hi), band, threads)
    if n_lo != 0 or n_hi < 1:
        raise PredicateNotBracketed(
            f"band returns: {n_lo} at nu={nu_lo} (need 0), {n_hi} at nu={nu_hi} (need >= 1)"
        )
    lo, hi = nu_lo, nu_hi
    while hi - lo > width:
        mid = 0.5 * (lo + hi)
        if count_returns(p_base.with_(nu=mid), band, threads) >= 1:
            hi = mid
        else:
            lo = mid
    return lo, hi
