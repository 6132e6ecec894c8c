"""Per-trajectory statistics and grid sweeps over a section."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core_system import EquilibriumInfo, Params, classify_equilibrium
from .errors import ProjectionDegenerate
from .integrator import EventSpec, PeriodicOrbit, ReturnOutcome, Trajectory, TrajectoryStats, classify_capture
from .parallel import pmap

LEFT, RIGHT = "Left", "Right"


def winding_basis(eq: EquilibriumInfo) -> np.ndarray:
    """Rows: center, u, n with u from the unstable plane and n = u x s."""
    u = eq.unstable_plane[0]
    n = np.cross(u, eq.stable_eigvec)
    n /= np.linalg.norm(n)
    return np.vstack([eq.location.as_array(), u, n])


def _angles(states: np.ndarray, basis: np.ndarray) -> np.ndarray:
    d = states - basis[0]
    du = d @ basis[1]
    dn = d @ basis[2]
    if np.any(np.hypot(du, dn) < 1e-14):
        raise ProjectionDegenerate("trajectory passes through the stable axis")
    return np.arctan2(dn, du)


def winding_of_states(states: np.ndarray, basis: np.ndarray) -> float:
    ang = _angles(np.asarray(states, dtype=float), basis)
    d = np.diff(ang)
    # wrap each increment into (-pi, pi]
    d = d - 2.0 * math.pi * np.ceil((d - math.pi) / (2.0 * math.pi))
    return float(d.sum()) / (2.0 * math.pi)


def winding_number(traj: Trajectory, eq: EquilibriumInfo) -> tuple[float, int]:
    w = winding_of_states(traj.states, winding_basis(eq))
    return w, int(math.floor(w))


def jump_direction(traj: Trajectory) -> str:
    return LEFT if float(np.min(traj.states[:, 0])) < -2.0 / 3.0 else RIGHT


def max_height(traj: Trajectory) -> float:
    """Maximum of y over the mesh and the per-step interpolants."""
    best = float(np.max(traj.states[:, 1]))
    if len(traj) > 1:
        th = np.linspace(0.0, 1.0, 17)[1:-1]
        P = th[None, :] ** np.arange(1, 5)[:, None]  # (4, m)
        ys = traj.states[:-1, 1][:, None] + traj.segments[:, 1, :] @ P
        best = max(best, float(ys.max()))
    return best


def tangency_line(p: Params) -> tuple[float, float, float]:
    """Coefficients (a, b, -nu) of the line a*x + b*y = -nu where z' vanishes on z = 0."""
    return p.a, p.b, -p.nu


@dataclass(frozen=True)
class GridSpec:
    window: tuple  # (u_lo, u_hi, v_lo, v_hi)
    resolution: tuple  # (n_u, n_v)

    def __post_init__(self):
        u0, u1, v0, v1 = self.window
        if not (u1 > u0 and v1 > v0):
            raise ValueError(f"degenerate window {self.window}")
        if min(self.resolution) < 2:
            raise ValueError(f"resolution components must be >= 2, got {self.resolution}")

    def nodes(self) -> np.ndarray:
        """Row-major (v outer, u inner) array of (u, v) pairs."""
        u0, u1, v0, v1 = self.window
        us = np.linspace(u0, u1, self.resolution[0])
        vs = np.linspace(v0, v1, self.resolution[1])
        return np.array([(u, v) for v in vs for u in us])


def lift(section: EventSpec, q) -> np.ndarray:
    s = np.empty(3)
    k = "xyz".index(section.surface)
    s[k] = section.level
    s[[i for i in range(3) if i != k]] = q
    return s


@dataclass
class GridCell:
    u: float
    v: float
    outcome: ReturnOutcome

    @property
    def stats(self) -> TrajectoryStats | None:
        return self.outcome.stats


def grid_sweep(
    p: Params,
    section: EventSpec,
    grid: GridSpec,
    gamma: PeriodicOrbit | None,
    threads: int | None = None,
) -> list[GridCell]:
    basis = winding_basis(classify_equilibrium(p))
    nodes = grid.nodes()

    def one(q):
        return GridCell(float(q[0]), float(q[1]), classify_capture(p, lift(section, q), section, gamma, basis=basis))

    return pmap(one, list(nodes), threads)


SWEEP_COLUMNS = ["u", "v", "tag", "turns", "winding", "y_max", "jump", "crossings"]


def sweep_rows(cells: list[GridCell]) -> list[tuple]:
    rows = []
    for c in cells:
        st = c.outcome.stats
        if c.outcome.returned and st is not None:
            rows.append((c.u, c.v, c.outcome.tag.value, st.turns, st.winding, st.y_max, st.jump, st.crossings))
        else:
            crossings = st.crossings if st is not None else 0
            rows.append((c.u, c.v, c.outcome.tag.value, "", "", "", "", crossings))
    return rows


def write_sweep_csv(path, cells: list[GridCell]) -> None:
    from .io import write_csv

    write_csv(path, SWEEP_COLUMNS, sweep_rows(cells))
