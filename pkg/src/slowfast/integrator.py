"""Adaptive Dormand-Prince integration with oriented plane events.

The heavy lifting happens in :mod:`slowfast._kernel`; this module turns flat
kernel output into :class:`Trajectory` and :class:`ReturnOutcome` objects and
hosts the periodic-orbit and capture machinery built on top of it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum, IntEnum

import numpy as np

from . import _kernel as K
from .core_system import Params, State, classify_equilibrium, find_equilibrium, vector_field
from .errors import NotCaptured, StepSizeUnderflow

RTOL = 1e-10
ATOL = 1e-12
H_MAX = 0.01
ESCAPE_RADIUS = 10.0
T_MAX = 600.0
CAPTURE_TUBE = 0.05
CAPTURE_HITS = 8

_NO_BASIS = np.zeros((3, 3))
_ZERO3 = np.zeros(3)


class Direction(IntEnum):
    FORWARD = 1
    BACKWARD = -1


class Orientation(IntEnum):
    """Sign of dg/dt (physical time) required at a crossing."""

    DECREASING = -1
    ANY = 0
    INCREASING = 1


class Outcome(Enum):
    RETURNED = "Returned"
    CAPTURED = "Captured"
    UNBOUNDED = "Unbounded"
    TIMEOUT = "Timeout"


_STATUS = {
    K.RETURNED: Outcome.RETURNED,
    K.CAPTURED: Outcome.CAPTURED,
    K.UNBOUNDED: Outcome.UNBOUNDED,
    K.TIMEOUT: Outcome.TIMEOUT,
}

_AXES = {"x": 0, "y": 1, "z": 2}


@dataclass(frozen=True)
class EventSpec:
    """Oriented crossing of the plane ``s[axis] = level``.

    ``guard`` > 0 keeps the event disarmed until ``|g|`` has exceeded it, which
    suppresses the crossing a trajectory makes right at its start.
    """

    surface: str = "z"
    level: float = 0.0
    orientation: Orientation = Orientation.DECREASING
    count: int = 1
    escape_radius: float = ESCAPE_RADIUS
    t_max: float = T_MAX
    guard: float = 0.0

    def __post_init__(self):
        if self.surface not in _AXES:
            raise ValueError(f"surface must be one of {sorted(_AXES)}, got {self.surface!r}")
        if self.count < 1:
            raise ValueError("count must be positive")
        if not (self.escape_radius > 0.0 and self.t_max > 0.0):
            raise ValueError("escape_radius and t_max must be positive")
        object.__setattr__(self, "orientation", Orientation(self.orientation))

    @property
    def normal(self) -> np.ndarray:
        n = np.zeros(3)
        n[_AXES[self.surface]] = 1.0
        return n

    def g(self, s) -> float:
        return float(np.asarray(s, dtype=float)[_AXES[self.surface]] - self.level)


def x_section(x0: float, orientation=Orientation.DECREASING, **kw) -> EventSpec:
    return EventSpec("x", x0, orientation, **kw)


def z_section(z0: float = 0.0, orientation=Orientation.DECREASING, **kw) -> EventSpec:
    return EventSpec("z", z0, orientation, **kw)


NEVER = EventSpec("x", 1e6, Orientation.ANY)


@dataclass
class Trajectory:
    """Mesh plus per-step quartic interpolants.

    ``segments[k]`` has shape (3, 4); component ``i`` on step ``k`` is
    ``states[k, i] + sum_j segments[k, i, j] * theta**(j+1)`` with
    ``theta = (t - times[k]) / (times[k+1] - times[k])``.
    """

    times: np.ndarray
    states: np.ndarray
    segments: np.ndarray

    def __len__(self) -> int:
        return len(self.times)

    def interpolate(self, t: float) -> np.ndarray:
        ts = self.times
        forward = ts[-1] >= ts[0]
        if forward:
            if not (ts[0] <= t <= ts[-1]):
                raise ValueError(f"t={t} outside [{ts[0]}, {ts[-1]}]")
            k = int(np.searchsorted(ts, t, side="right")) - 1
        else:
            if not (ts[-1] <= t <= ts[0]):
                raise ValueError(f"t={t} outside [{ts[-1]}, {ts[0]}]")
            k = int(np.searchsorted(-ts, -t, side="right")) - 1
        if k >= len(ts) - 1:
            return self.states[-1].copy()
        if t == ts[k]:
            return self.states[k].copy()
        th = (t - ts[k]) / (ts[k + 1] - ts[k])
        powers = th ** np.arange(1, 5)
        return self.states[k] + self.segments[k] @ powers

    def reversed(self) -> "Trajectory":
        """Same path traversed backwards (mesh only; interpolants are re-expressed)."""
        n = len(self.times)
        segs = np.empty_like(self.segments)
        for k in range(n - 1):
            # p(theta) on the original step; q(s) = p(1 - s) - p(1)
            Q = self.segments[k]
            c = np.zeros((3, 5))
            c[:, 1:] = Q
            total = c.sum(axis=1)
            # expand p(1 - s) in powers of s
            out = np.zeros((3, 5))
            for j in range(1, 5):
                for m in range(j + 1):
                    out[:, m] += c[:, j] * math.comb(j, m) * (-1) ** m
            out[:, 0] -= total
            segs[n - 2 - k] = out[:, 1:]
        return Trajectory(self.times[::-1].copy(), self.states[::-1].copy(), segs)

    def to_csv(self, path) -> None:
        from .io import write_csv

        rows = [(t, *s) for t, s in zip(self.times, self.states)]
        write_csv(path, ["t", "x", "y", "z"], rows)


@dataclass
class TrajectoryStats:
    """Per-return statistics collected while integrating.

    ``winding`` is in turns (radians / 2 pi); ``turns = floor(winding)``.
    """

    winding: float
    turns: int
    y_max: float
    x_min: float
    jump: str  # "Left" or "Right"
    crossings: int


@dataclass
class ReturnOutcome:
    tag: Outcome
    hit: State | None = None
    time: float | None = None
    stats: TrajectoryStats | None = None
    end_state: State | None = None
    end_time: float | None = None

    def __post_init__(self):
        if (self.hit is not None) != (self.tag is Outcome.RETURNED):
            raise ValueError("hit must be present exactly when the tag is Returned")

    @property
    def returned(self) -> bool:
        return self.tag is Outcome.RETURNED


@dataclass
class RawRun:
    status: int
    t_end: float
    y_end: np.ndarray
    n_hits: int
    last_hit: np.ndarray
    last_hit_t: float
    winding: float
    y_max: float
    x_min: float
    ts: np.ndarray
    ys: np.ndarray
    qs: np.ndarray


def run_raw(
    p,
    s0,
    ev: EventSpec,
    direction: int = 1,
    *,
    capture: tuple | None = None,
    basis: np.ndarray | None = None,
    record: bool = False,
    rtol: float = RTOL,
    atol: float = ATOL,
    h_max: float = H_MAX,
    model: int = K.MODEL_SLOWFAST,
) -> RawRun:
    """Thin kernel call. ``p`` may be :class:`Params` or a raw parameter array.

    ``capture`` is ``(anchor, normal, tube, hits)`` or None.
    """
    prm = p.as_array() if isinstance(p, Params) else np.asarray(p, dtype=np.float64)
    y0 = s0.as_array() if isinstance(s0, State) else np.asarray(s0, dtype=np.float64)
    if capture is None:
        anchor, normal, tube, hits = _ZERO3, _ZERO3, 0.0, 1
    else:
        anchor, normal, tube, hits = capture
    out = K.run(
        model,
        prm,
        y0.copy(),
        float(direction),
        ev.normal,
        float(ev.level),
        int(ev.orientation),
        int(ev.count),
        float(ev.guard),
        float(ev.escape_radius),
        float(ev.t_max),
        rtol,
        atol,
        h_max,
        np.asarray(anchor, dtype=np.float64),
        np.asarray(normal, dtype=np.float64),
        float(tube),
        int(hits),
        _NO_BASIS if basis is None else np.asarray(basis, dtype=np.float64),
        record,
    )
    status = int(out[0])
    if status == K.UNDERFLOW:
        raise StepSizeUnderflow(f"step size fell below 1e-14 near t={out[1]}, state={out[2]}")
    return RawRun(status, *out[1:12])


def _stats(raw: RawRun) -> TrajectoryStats:
    w = raw.winding / (2.0 * math.pi)
    return TrajectoryStats(
        winding=w,
        turns=int(math.floor(w)),
        y_max=float(raw.y_max),
        x_min=float(raw.x_min),
        jump="Left" if raw.x_min < -2.0 / 3.0 else "Right",
        crossings=int(raw.n_hits),
    )


def _outcome(raw: RawRun, with_stats: bool) -> ReturnOutcome:
    tag = _STATUS[raw.status]
    hit = State.of(raw.last_hit) if tag is Outcome.RETURNED else None
    return ReturnOutcome(
        tag=tag,
        hit=hit,
        time=float(raw.last_hit_t) if hit is not None else None,
        stats=_stats(raw) if with_stats else None,
        end_state=State.of(raw.y_end) if np.all(np.isfinite(raw.y_end)) else None,
        end_time=float(raw.t_end),
    )


def integrate(
    p: Params,
    s0,
    direction: Direction = Direction.FORWARD,
    ev: EventSpec = NEVER,
    *,
    basis: np.ndarray | None = None,
    rtol: float = RTOL,
    atol: float = ATOL,
    h_max: float = H_MAX,
) -> tuple[Trajectory, ReturnOutcome]:
    """Integrate until the event, escape or ``ev.t_max``; the full mesh is recorded."""
    raw = run_raw(p, s0, ev, int(direction), basis=basis, record=True, rtol=rtol, atol=atol, h_max=h_max)
    traj = Trajectory(raw.ts.copy(), raw.ys.copy(), raw.qs.copy())
    return traj, _outcome(raw, with_stats=True)


@dataclass
class PeriodicOrbit:
    anchor: State
    period: float
    samples: np.ndarray  # (m, 3) states over one period
    floquet_proxy: float
    normal: np.ndarray = field(default_factory=lambda: np.zeros(3))

    @property
    def capture_spec(self) -> tuple:
        return (self.anchor.as_array(), self.normal, CAPTURE_TUBE, CAPTURE_HITS)


def _plane_return(p: Params, s, normal, level, t_max=50.0):
    """First return to the plane n.s = level with n.f > 0 after leaving it."""
    ev = _GeneralPlane(normal, level, t_max)
    raw = K.run(
        K.MODEL_SLOWFAST,
        p.as_array(),
        np.asarray(s, dtype=np.float64).copy(),
        1.0,
        ev.normal,
        ev.level,
        1,
        1,
        1e-6,
        ESCAPE_RADIUS,
        t_max,
        RTOL,
        ATOL,
        H_MAX,
        _ZERO3,
        _ZERO3,
        0.0,
        1,
        _NO_BASIS,
        False,
    )
    if raw[0] != K.RETURNED:
        return None, None
    return np.array(raw[4]), float(raw[5])


@dataclass(frozen=True)
class _GeneralPlane:
    normal: np.ndarray
    level: float
    t_max: float


def find_periodic_orbit(
    p: Params,
    t_transient: float = 200.0,
    tol: float = 1e-10,
    max_iter: int = 200,
    seeds: list | None = None,
) -> PeriodicOrbit:
    """Locate the small stable cycle around the equilibrium.

    The default seed is the equilibrium displaced by 1e-3 along the unstable
    plane. When that seed escapes (the cycle's basin can shrink away from the
    equilibrium) further seeds on z = 0 are tried in order.
    """
    info = classify_equilibrium(p)
    eq = info.location.as_array()
    u = info.unstable_plane[0]
    if seeds is None:
        seeds = [eq + 1e-3 * u, np.array([-0.07, -0.0025, 0.0]), np.array([-0.07, 0.0, 0.0]),
                 np.array([-0.05, 0.0, 0.0])]
    far = EventSpec("x", 1e6, Orientation.ANY, t_max=t_transient)
    last_err = "no seed tried"
    for seed in seeds:
        raw = run_raw(p, seed, far)
        if raw.status != K.TIMEOUT:
            last_err = f"seed {seed} ended with status {raw.status} during the transient"
            continue
        s = raw.y_end.copy()
        normal = vector_field(p, s)
        normal /= np.linalg.norm(normal)
        level = float(normal @ s)
        prev = s
        converged = False
        period = math.nan
        for _ in range(max_iter):
            nxt, T = _plane_return(p, prev, normal, level)
            if nxt is None:
                break
            if np.linalg.norm(nxt - prev) < tol:
                prev, period, converged = nxt, T, True
                break
            prev, period = nxt, T
        if not converged:
            last_err = f"section iterates from seed {seed} did not converge"
            continue
        anchor = prev
        # re-anchor the section on the cycle itself
        normal = vector_field(p, anchor)
        normal /= np.linalg.norm(normal)
        level = float(normal @ anchor)
        back, period = _plane_return(p, anchor, normal, level)
        # samples over one period
        traj, _ = integrate(p, anchor, Direction.FORWARD, EventSpec("x", 1e6, Orientation.ANY, t_max=period))
        samples = traj.states
        # floquet proxy: spectral radius of the section map's 2x2 linearization
        e1 = np.cross(normal, [0.0, 0.0, 1.0])
        if np.linalg.norm(e1) < 1e-8:
            e1 = np.cross(normal, [1.0, 0.0, 0.0])
        e1 /= np.linalg.norm(e1)
        e2 = np.cross(normal, e1)
        d_in = 1e-6
        M = np.empty((2, 2))
        for j, e in enumerate((e1, e2)):
            pert, _ = _plane_return(p, anchor + d_in * e, normal, level)
            if pert is None:
                raise NotCaptured("perturbed anchor did not return to the cycle section")
            d = (pert - back) / d_in
            M[:, j] = (d @ e1, d @ e2)
        floquet = float(np.max(np.abs(np.linalg.eigvals(M))))
        if floquet >= 1.0:
            last_err = f"cycle found from seed {seed} is not attracting (proxy {floquet:.3g})"
            continue
        return PeriodicOrbit(State.of(anchor), float(period), samples, floquet, normal)
    raise NotCaptured(f"no attracting cycle at {p}: {last_err}")


def classify_capture(
    p: Params,
    s0,
    section: EventSpec,
    gamma: PeriodicOrbit | None,
    *,
    basis: np.ndarray | None = None,
    tube: float = CAPTURE_TUBE,
    hits: int = CAPTURE_HITS,
) -> ReturnOutcome:
    """Integrate with the section armed and a capture monitor around ``gamma``.

    Captured means ``hits`` consecutive passes through the cycle's anchor
    plane, each inside the tube and strictly closer to the anchor than the
    previous one, before the section event fires.
    """
    cap = None
    if gamma is not None:
        cap = (gamma.anchor.as_array(), gamma.normal, tube, hits)
    raw = run_raw(p, s0, section, 1, capture=cap, basis=basis)
    return _outcome(raw, with_stats=True)
