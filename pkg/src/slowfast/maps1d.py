"""One-dimensional return map on the plane x = 0.3.

Points of the plane are parametrized by z alone. A value z is lifted to the
point of the attracting slow manifold with that z (a spline profile built by
shooting, see :func:`slowfast.manifolds.slow_manifold_profile`), followed
forward, and mapped to the z of its next crossing of x = 0.3 with x
decreasing. Trajectories captured by the small cycle, escaping, or timing out
are gaps.

Every analysis routine here also accepts a plain callable ``f(z) -> float``
(nan meaning gap) or, for parameter scans, a family ``nu -> f``; the
harness maps in the tests go through the same code paths.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from .core_system import Params
from .errors import NoSignChange, NotCaptured, PredicateNotBracketed
from .integrator import Outcome, classify_capture, find_periodic_orbit, x_section, Orientation
from .manifolds import slow_manifold_profile
from .parallel import pmap

X_PLUS = 0.3
GUARD = 0.05
T_RETURN = 300.0
CRITICAL_WINDOW = (0.0415, 0.0455)
SADDLE_NODE_WINDOW = (0.040, 0.047)


@dataclass(frozen=True)
class Map1DSample:
    z_in: float
    z_out: float | None = None
    gap: Outcome | None = None  # cause when the trajectory did not return

    def __post_init__(self):
        if (self.z_out is None) == (self.gap is None):
            raise ValueError("exactly one of z_out and gap must be set")
        if self.z_out is not None and not math.isfinite(self.z_out):
            raise ValueError("z_out must be finite")

    @property
    def value(self) -> float:
        return math.nan if self.z_out is None else self.z_out


class ReturnMap1D:
    """R on {x = 0.3} at fixed parameters; the slow-manifold profile and the
    small cycle used for capture detection are computed once."""

    def __init__(self, p: Params, x0: float = X_PLUS, guard: float = GUARD, t_max: float = T_RETURN):
        self.p = p
        self.x0 = x0
        self.profile = slow_manifold_profile(p, x0, x_anchor=0.45)
        try:
            self.gamma = find_periodic_orbit(p)
        except NotCaptured:
            self.gamma = None
        self.section = x_section(x0, Orientation.DECREASING, guard=guard, t_max=t_max)

    def lift(self, z: float) -> np.ndarray:
        return np.array([self.x0, float(self.profile(z)), z])

    def sample(self, z: float) -> Map1DSample:
        out = classify_capture(self.p, self.lift(z), self.section, self.gamma)
        if out.returned:
            return Map1DSample(float(z), out.hit.z)
        return Map1DSample(float(z), gap=out.tag)

    def __call__(self, z: float) -> float:
        return self.sample(z).value


@lru_cache(maxsize=32)
def return_map(p: Params) -> ReturnMap1D:
    return ReturnMap1D(p)


def eval_R(p: Params, z: float) -> Map1DSample:
    return return_map(p).sample(z)


def _as_map(m) -> Callable[[float], float]:
    return return_map(m) if isinstance(m, Params) else m


def _sample(f, z) -> Map1DSample:
    if isinstance(f, ReturnMap1D):
        return f.sample(z)
    v = float(f(z))
    return Map1DSample(float(z), v) if math.isfinite(v) else Map1DSample(float(z), gap=Outcome.TIMEOUT)


def sample_R(
    m,
    z_lo: float,
    z_hi: float,
    n: int,
    levels: int = 3,
    factor: int = 4,
    jump: float = 0.01,
    threads: int | None = None,
) -> list[Map1DSample]:
    """Uniform samples plus refinement where neighbors jump or straddle a gap boundary."""
    if n < 2:
        raise ValueError("n must be at least 2")
    f = _as_map(m)
    S = pmap(lambda z: _sample(f, z), list(np.linspace(z_lo, z_hi, n)), threads)
    for _ in range(levels):
        new_z = []
        for a, b in zip(S[:-1], S[1:]):
            gap_edge = (a.z_out is None) != (b.z_out is None)
            steep = a.z_out is not None and b.z_out is not None and abs(b.z_out - a.z_out) > jump
            if gap_edge or steep:
                new_z.extend(a.z_in + (b.z_in - a.z_in) * k / factor for k in range(1, factor))
        if not new_z:
            break
        S = sorted(S + pmap(lambda z: _sample(f, z), new_z, threads), key=lambda s: s.z_in)
    return S


def gap_runs(samples: Sequence[Map1DSample]) -> list[tuple[float, float]]:
    """Maximal runs of consecutive gap samples, as (first z_in, last z_in)."""
    runs, start, prev = [], None, None
    for s in samples:
        if s.z_out is None:
            if start is None:
                start = s.z_in
            prev = s.z_in
        elif start is not None:
            runs.append((start, prev))
            start = None
    if start is not None:
        runs.append((start, prev))
    return runs


def slope(f, z: float, h0: float = 1e-6, h_min: float = 1e-9, rel: float = 1e-3) -> float:
    """Central difference, halving the step until two estimates agree."""
    h = h0
    prev = (f(z + h) - f(z - h)) / (2.0 * h)
    while h / 2.0 >= h_min:
        h /= 2.0
        cur = (f(z + h) - f(z - h)) / (2.0 * h)
        if abs(cur - prev) <= rel * abs(cur):
            return cur
        prev = cur
    return prev


def _bisect_root(g, a: float, b: float, ga: float, tol: float = 1e-10) -> float:
    m = 0.5 * (a + b)
    for _ in range(200):
        m = 0.5 * (a + b)
        gm = g(m)
        if not math.isfinite(gm):
            break
        if abs(gm) < tol or m in (a, b):
            break
        if (gm < 0.0) == (ga < 0.0):
            a, ga = m, gm
        else:
            b = m
    return m


def find_fixed_points(samples: Sequence[Map1DSample], m=None) -> list[tuple[float, float]]:
    """Fixed points from sign changes of R(z) - z inside gap-free runs.

    ``m`` (Params or callable) is the map the samples came from; it is
    needed for the bisection and the slope.
    """
    if m is None:
        raise ValueError("a map is required to refine fixed points")
    f = _as_map(m)
    g = lambda z: f(z) - z
    out = []
    for i, s in enumerate(samples):
        if s.z_out is None:
            continue
        gi = s.z_out - s.z_in
        if gi == 0.0:
            out.append((s.z_in, slope(f, s.z_in)))
            continue
        if i + 1 < len(samples) and samples[i + 1].z_out is not None:
            t = samples[i + 1]
            gj = t.z_out - t.z_in
            if gi * gj < 0.0:
                z = _bisect_root(g, s.z_in, t.z_in, gi)
                out.append((z, slope(f, z)))
    return out


def find_critical_point(m, z_lo: float = CRITICAL_WINDOW[0], z_hi: float = CRITICAL_WINDOW[1],
                        h: float = 1e-7, width: float = 1e-13) -> float:
    """Bisection on the sign of the central-difference slope."""
    f = _as_map(m)
    d = lambda z: f(z + h) - f(z - h)
    d_lo, d_hi = d(z_lo), d(z_hi)
    if not (math.isfinite(d_lo) and math.isfinite(d_hi)) or d_lo * d_hi >= 0.0:
        raise NoSignChange(f"slope does not change sign on [{z_lo}, {z_hi}]")
    lo, hi = z_lo, z_hi
    while hi - lo > width:
        mid = 0.5 * (lo + hi)
        dm = d(mid)
        if not math.isfinite(dm):
            raise NoSignChange(f"gap inside the critical window at z={mid}")
        if (dm < 0.0) == (d_lo < 0.0):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def iterate(f, z: float, k: int) -> float:
    for _ in range(k):
        z = f(z)
        if not math.isfinite(z):
            return math.nan
    return z


def _closure_defect(p: Params, window) -> float:
    f = return_map(p)
    c = find_critical_point(f, *window)
    r2 = iterate(f, c, 2)
    return iterate(f, r2, 1) - r2


def closure_defect(p: Params, window=CRITICAL_WINDOW) -> float:
    """R^3(c) - R^2(c); nan when the critical orbit falls in a gap or c is not found."""
    try:
        return _closure_defect(p, window)
    except NoSignChange:
        return math.nan


def tune_nu_for_critical_closure(
    p_base: Params,
    nu_lo: float = 0.0087000,
    nu_hi: float = 0.0087020,
    n_scan: int = 81,
    window=CRITICAL_WINDOW,
    keep: int = 3,
    split: int = 10,
    max_levels: int = 8,
    nu_tol: float = 1e-16,
    threads: int | None = None,
) -> tuple[float, float]:
    """nu minimizing |R^2(c) - R^3(c)| over the bracket.

    The defect is far from unimodal and its zeros sit in spikes narrower
    than any practical grid. The grid is refined around the ``keep`` nodes
    of smallest residual until a sign change between finite neighbors
    appears; each sign change is then bisected and the smallest residual
    seen anywhere is returned.
    """
    D = lambda nu: closure_defect(p_base.with_(nu=float(nu)), window)
    nodes = {float(nu): d for nu, d in zip(np.linspace(nu_lo, nu_hi, n_scan),
                                          pmap(D, list(np.linspace(nu_lo, nu_hi, n_scan)), threads))}

    def sign_changes():
        ks = sorted(nodes)
        return [(a, b) for a, b in zip(ks[:-1], ks[1:])
                if math.isfinite(nodes[a]) and math.isfinite(nodes[b]) and nodes[a] * nodes[b] <= 0.0]

    for _ in range(max_levels):
        if sign_changes():
            break
        ks = sorted(nodes)
        finite = sorted((abs(nodes[k]), i) for i, k in enumerate(ks) if math.isfinite(nodes[k]))
        new = []
        for _, i in finite[:keep]:
            lo, hi = ks[max(i - 1, 0)], ks[min(i + 1, len(ks) - 1)]
            new.extend(float(v) for v in np.linspace(lo, hi, 2 * split + 1)[1:-1] if float(v) not in nodes)
        if not new:
            break
        nodes.update(zip(new, pmap(D, new, threads)))

    best = min(((k, abs(d)) for k, d in nodes.items() if math.isfinite(d)), key=lambda e: e[1],
               default=(math.nan, math.inf))
    for a, b in sign_changes():
        da = nodes[a]
        while b - a > nu_tol:
            mid = 0.5 * (a + b)
            if mid in (a, b):
                break
            dm = D(mid)
            if not math.isfinite(dm):
                break
            if abs(dm) < best[1]:
                best = (mid, abs(dm))
            if (dm < 0.0) == (da < 0.0):
                a, da = mid, dm
            else:
                b = mid
    return best


def count_crossings(f, window, n: int) -> int:
    """Sign changes of f(z) - z between consecutive finite samples."""
    zs = np.linspace(window[0], window[1], n)
    g = np.array([f(z) - z for z in zs])
    cnt = 0
    for a, b in zip(g[:-1], g[1:]):
        if math.isfinite(a) and math.isfinite(b) and (a == 0.0 or a * b < 0.0):
            cnt += 1
    return cnt


def _family(m):
    if isinstance(m, Params):
        return lambda nu: ReturnMap1D(m.with_(nu=float(nu)))
    return m


def saddle_node_scan(
    family,
    nu_lo: float = 0.00795,
    nu_hi: float = 0.00810,
    window=SADDLE_NODE_WINDOW,
    n: int = 351,
    width: float = 1e-6,
) -> tuple[float, float]:
    """Bisect on nu for the change in the number of diagonal crossings in ``window``.

    ``family`` is :class:`Params` (nu is replaced) or a callable nu -> map.
    """
    fam = _family(family)
    n_lo = count_crossings(fam(nu_lo), window, n)
    n_hi = count_crossings(fam(nu_hi), window, n)
    if n_lo == n_hi:
        raise PredicateNotBracketed(f"{n_lo} diagonal crossings at both ends of [{nu_lo}, {nu_hi}]")
    lo, hi = nu_lo, nu_hi
    while hi - lo > width:
        mid = 0.5 * (lo + hi)
        if count_crossings(fam(mid), window, n) == n_lo:
            lo = mid
        else:
            hi = mid
    return lo, hi


@dataclass
class DiagramRow:
    nu: float
    values: np.ndarray  # kept iterates
    escaped_at: int | None = None  # iteration index at which the orbit hit a gap

    def cardinality(self, tol: float = 1e-6) -> int | None:
        if self.escaped_at is not None or len(self.values) == 0:
            return None
        v = np.sort(self.values)
        return int(1 + np.sum(np.diff(v) > tol))

    def period(self, tol: float = 1e-6) -> int | None:
        """Smallest k with x[i+k] = x[i] (within tol) across the kept orbit, else None."""
        if self.escaped_at is not None:
            return None
        x = self.values
        for k in range(1, len(x) // 2 + 1):
            if np.all(np.abs(x[k:] - x[:-k]) < tol):
                return k
        return None


def orbit_row(f, nu: float, seed: float, transient: int = 200, keep: int = 100) -> DiagramRow:
    z = seed
    vals = []
    for i in range(transient + keep):
        z = f(z)
        if not math.isfinite(z):
            return DiagramRow(nu, np.array(vals), escaped_at=i + 1)
        if i >= transient:
            vals.append(z)
    return DiagramRow(nu, np.array(vals))


def orbit_diagram(
    family,
    nu_lo: float = 0.008685,
    nu_hi: float = 0.0087013,
    n_nu: int = 200,
    transient: int = 200,
    keep: int = 100,
    seed=None,
    window=CRITICAL_WINDOW,
    threads: int | None = None,
) -> list[DiagramRow]:
    """Attractor samples per nu, seeded at the critical point (recomputed per nu)
    unless ``seed`` is given."""
    fam = _family(family)

    def one(nu):
        f = fam(float(nu))
        s = find_critical_point(f, *window) if seed is None else seed
        return orbit_row(f, float(nu), s, transient, keep)

    return pmap(one, list(np.linspace(nu_lo, nu_hi, n_nu)), threads)


@dataclass
class Window:
    period: int
    nu_lo: float
    nu_hi: float


def periodic_windows(rows: Sequence[DiagramRow], tol: float = 1e-6) -> list[Window]:
    """Maximal runs of consecutive rows sharing the same finite period."""
    out = []
    cur = None
    for r in rows:
        k = r.period(tol)
        if k is not None and cur is not None and cur.period == k:
            cur.nu_hi = r.nu
        else:
            cur = Window(k, r.nu, r.nu) if k is not None else None
            if cur is not None:
                out.append(cur)
    return out


def doubling_sequence(rows: Sequence[DiagramRow], tol: float = 1e-6) -> list[int]:
    """Leading periods 1, 2, 4, ... in the order they first appear with increasing nu."""
    seen = []
    for w in periodic_windows(rows, tol):
        if not seen and w.period == 1:
            seen.append(1)
        elif seen and w.period == 2 * seen[-1]:
            seen.append(w.period)
    return seen


def superstable_windows(
    family,
    nus: Sequence[float],
    k: int,
    window=CRITICAL_WINDOW,
    tol: float = 1e-6,
    transient: int = 200,
    keep: int = 100,
) -> list[float]:
    """Parameters between grid nodes where R^k(c) - c changes sign and the
    attractor seeded at c has period k; narrow windows between diagram
    columns are found this way."""
    fam = _family(family)

    def defect(nu):
        f = fam(float(nu))
        try:
            c = find_critical_point(f, *window)
        except NoSignChange:
            return math.nan, None, None
        return iterate(f, c, k) - c, f, c

    found = []
    prev = defect(nus[0])[0]
    for a, b in zip(nus[:-1], nus[1:]):
        cur = defect(b)[0]
        if math.isfinite(prev) and math.isfinite(cur) and prev * cur < 0.0:
            lo, hi, dlo = float(a), float(b), prev
            for _ in range(60):
                mid = 0.5 * (lo + hi)
                dm = defect(mid)[0]
                if not math.isfinite(dm):
                    break
                if (dm < 0.0) == (dlo < 0.0):
                    lo, dlo = mid, dm
                else:
                    hi = mid
            nu = 0.5 * (lo + hi)
            _, f, c = defect(nu)
            if f is not None and orbit_row(f, nu, c, transient, keep).period(tol) == k:
                found.append(nu)
        prev = cur
    return found


def multiplier_crossing(
    family,
    k: int,
    nu_lo: float,
    nu_hi: float,
    z0: float,
    tol: float = 1e-10,
    h: float = 1e-7,
) -> float:
    """nu where the multiplier of the period-k orbit through z0 passes -1.

    The periodic point is tracked by Newton iteration on R^k(z) - z, so the
    orbit is followed past its loss of stability.
    """
    fam = _family(family)

    def mult(nu, z):
        f = fam(float(nu))
        g = lambda s: iterate(f, s, k) - s
        for _ in range(50):
            dg = (g(z + h) - g(z - h)) / (2.0 * h)
            step = g(z) / dg
            z -= step
            if abs(step) < 1e-14:
                break
        lam = 1.0
        s = z
        for _ in range(k):
            lam *= (f(s + h) - f(s - h)) / (2.0 * h)
            s = f(s)
        return lam + 1.0, z

    m_lo, z = mult(nu_lo, z0)
    m_hi, _ = mult(nu_hi, z)
    if m_lo * m_hi >= 0.0:
        raise PredicateNotBracketed(f"period-{k} multiplier does not pass -1 on [{nu_lo}, {nu_hi}]")
    lo, hi = nu_lo, nu_hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        mm, zm = mult(mid, z)
        if (mm < 0.0) == (m_lo < 0.0):
            lo, z = mid, zm
        else:
            hi = mid
    return 0.5 * (lo + hi)


class Terminal(Enum):
    HIT_GAP = "HitGap"
    MAX_ITERATES = "MaxIterates"
    FIXED_POINT = "FixedPointConverged"


@dataclass
class Orbit1D:
    start: float
    iterates: np.ndarray
    terminal: Terminal

    def histogram(self, bins: int = 100) -> tuple[np.ndarray, np.ndarray]:
        """(bin centers, counts) over the observed iterate range."""
        v = self.iterates
        if len(v) == 0:
            return np.empty(0), np.empty(0, dtype=int)
        lo, hi = float(v.min()), float(v.max())
        if hi == lo:
            return np.array([lo]), np.array([len(v)])
        counts, edges = np.histogram(v, bins=bins, range=(lo, hi))
        return 0.5 * (edges[:-1] + edges[1:]), counts


def critical_itinerary(m, c: float, max_iter: int = 100000) -> Orbit1D:
    f = _as_map(m)
    z = c
    out = []
    for _ in range(max_iter):
        nz = f(z)
        if not math.isfinite(nz):
            return Orbit1D(c, np.array(out), Terminal.HIT_GAP)
        out.append(nz)
        if nz == z:
            return Orbit1D(c, np.array(out), Terminal.FIXED_POINT)
        z = nz
    return Orbit1D(c, np.array(out), Terminal.MAX_ITERATES)


def itinerary_sensitivity(p: Params, name: str, deltas: Sequence[float], window=CRITICAL_WINDOW,
                          max_iter: int = 100000) -> list[tuple[float, int, Terminal]]:
    """Itinerary lengths of the critical orbit under small shifts of one parameter."""
    out = []
    for d in deltas:
        q = p.with_(**{name: getattr(p, name) + d})
        f = return_map(q)
        orb = critical_itinerary(f, find_critical_point(f, *window), max_iter)
        out.append((float(d), len(orb.iterates), orb.terminal))
    return out
