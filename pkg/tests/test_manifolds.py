from __future__ import annotations

import csv
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from slowfast.core_system import Params, classify_equilibrium
from slowfast.errors import PredicateNotBracketed
from slowfast.integrator import EventSpec, Orientation, Outcome, find_periodic_orbit, run_raw, x_section, z_section
from slowfast.manifolds import (
    BranchTag,
    ManifoldSeedBand,
    SpiralCurve,
    count_returns,
    critical_manifold_y,
    detect_tangency,
    fold_lines,
    refine_curve,
    slow_manifold_profile,
    slow_manifold_section,
    stable_manifold_Ws,
    unstable_manifold_Wu,
)

from conftest import P_MAIN, P_SAO


@given(st.floats(-3, 3, allow_nan=False))
def test_critical_manifold_closed_form(x):
    from fractions import Fraction

    xf = Fraction(x)
    assert critical_manifold_y(x) == pytest.approx(float(xf ** 2 + xf ** 3), abs=1e-15 * (xf ** 2 + abs(xf) ** 3 + 1e-300))
    # x' vanishes on the surface
    from slowfast.core_system import vector_field

    y = critical_manifold_y(x)
    assert abs(vector_field(P_MAIN, (x, y, 0.0))[0]) <= 1e-13 * max(1.0, abs(x) ** 3) / P_MAIN.eps


def test_fold_lines_are_critical_points_of_the_cubic():
    for x in fold_lines():
        assert 2 * x + 3 * x * x == pytest.approx(0.0, abs=1e-15)
    assert sorted(fold_lines()) == [-2.0 / 3.0, 0.0]


def test_spiral_curve_construction(tmp_path):
    pts = np.array([[0, 0], [1, 0], [1, 0], [1, 2]], dtype=float)
    c = SpiralCurve.from_points(pts, BranchTag.REPELLING)
    assert len(c.points) == 3
    assert c.arclength.tolist() == [0.0, 1.0, 3.0]
    s, d = c.project((0.5, 0.25))
    assert (s, d) == pytest.approx((0.5, 0.25))
    assert [len(p) for p in c.pieces(1.5)] == [2, 1]
    path = tmp_path / "c.csv"
    c.to_csv(path)
    rows = list(csv.reader(path.open()))
    assert rows[0] == ["s", "u", "v", "branch_tag"]
    assert rows[1][3] == "Repelling"
    with pytest.raises(ValueError):
        SpiralCurve(pts[:2], np.array([0.0, -1.0]), BranchTag.REPELLING, np.zeros(2))


def test_refine_curve_on_circle():
    hit = lambda t: np.array([math.cos(t), math.sin(t)])
    ts, P = refine_curve(hit, np.linspace(0, math.pi, 5), ds=1e-2, threads=1)
    assert np.all(np.diff(ts) > 0)
    assert np.linalg.norm(np.diff(P, axis=0), axis=1).max() <= 1e-2
    # a hole in the domain is left as a gap, not bridged forever
    holey = lambda t: None if 1.0 < t < 1.2 else hit(t)
    ts, P = refine_curve(holey, np.linspace(0, math.pi, 5), ds=1e-2, max_levels=12, threads=1)
    assert not np.any((ts > 1.0) & (ts < 1.2))


def _polyline_gap(A: SpiralCurve, B: SpiralCurve, max_gap=1e-3) -> float:
    pieces = [SpiralCurve.from_points(p, A.branch_tag) for p in A.pieces(max_gap)]
    return max(min(c.project(q)[1] for c in pieces) for q in B.points)


@pytest.mark.slow
def test_spiral_seed_density_convergence():
    sec = z_section(0.0, Orientation.DECREASING, t_max=100.0)
    A = slow_manifold_section(P_MAIN, BranchTag.ATTRACTING_PLUS, sec, 400)
    B = slow_manifold_section(P_MAIN, BranchTag.ATTRACTING_PLUS, sec, 800)
    h = max(_polyline_gap(A, B), _polyline_gap(B, A))
    print(f"spiral 400 vs 800 seeds: Hausdorff {h:.3g}")
    assert h < 1e-4


def test_spiral_points_track_the_sheet():
    # forward from a traced point the trajectory hugs the critical surface while x > 0.1
    sec = x_section(0.3, Orientation.DECREASING, guard=0.05, t_max=300.0)
    prof = slow_manifold_profile(P_MAIN, 0.3, n_seeds=60, x_anchor=0.45)
    for z in (0.0, 0.05, 0.1):
        s0 = np.array([0.3, float(prof(z)), z])
        r = run_raw(P_MAIN, s0, EventSpec("x", 1e6, Orientation.ANY, t_max=1.0), record=True)
        ok = r.ys[:, 0] > 0.1
        dev = np.abs(r.ys[ok, 1] - critical_manifold_y(r.ys[ok, 0]))
        assert dev.max() < 2 * P_MAIN.eps


def test_stable_manifold_crossing_and_offset_convergence():
    ws = stable_manifold_Ws(P_SAO)
    ws2 = stable_manifold_Ws(P_SAO, offset=5e-9)
    assert np.linalg.norm(ws.crossing.as_array() - ws2.crossing.as_array()) < 1e-6
    # the section window of the max-height grid contains it
    assert -0.07 <= ws.crossing.x <= 0.11 and -0.005 <= ws.crossing.y <= 0.01
    assert abs(ws.crossing.z) < 1e-10


def test_stable_manifold_is_stable():
    info = classify_equilibrium(P_MAIN)
    ws = stable_manifold_Ws(P_MAIN)
    eq = info.location.as_array()
    # re-integrate forward from a point part way along the computed branch
    k = int(np.argmin(np.abs(np.linalg.norm(ws.trajectory.states - eq, axis=1) - 1e-3)))
    s0 = ws.trajectory.states[k]
    r = run_raw(P_MAIN, s0, EventSpec("x", 1e6, Orientation.ANY, t_max=40.0), record=True)
    d = np.linalg.norm(r.ys - eq, axis=1)
    first_close = np.argmax(d < 1e-6)
    assert d[first_close] < 1e-6
    assert d[: first_close + 1].max() < 0.1
    # near the equilibrium the branch is a straight line along the stable eigenvector
    near = ws.trajectory.states[np.linalg.norm(ws.trajectory.states - eq, axis=1) < 1e-4] - eq
    off = near - np.outer(near @ info.stable_eigvec, info.stable_eigvec)
    assert np.linalg.norm(off, axis=1).max() < 5e-3 * 1e-4


def test_unstable_rays_before_and_after_tangency():
    ev = x_section(0.27, Orientation.ANY, guard=0.05, t_max=150.0)
    tags = {}
    for nu in (0.00647, 0.00648):
        p = P_MAIN.with_(nu=nu)
        out = unstable_manifold_Wu(p, 64, ev, gamma=find_periodic_orbit(p))
        tags[nu] = [o.tag for o in out]
    assert all(t is Outcome.CAPTURED for t in tags[0.00647])
    assert any(t is Outcome.RETURNED for t in tags[0.00648])


def test_unstable_seeds_move_away():
    info = classify_equilibrium(P_MAIN)
    eq = info.location.as_array()
    u, w = info.unstable_plane
    for t in np.linspace(0, 2 * np.pi, 8, endpoint=False):
        v = math.cos(t) * u + math.sin(t) * w
        s0 = eq + 1e-6 * v / np.linalg.norm(v)
        r = run_raw(P_MAIN, s0, EventSpec("x", 1e6, Orientation.ANY, t_max=3.0))
        # growth rate is the real part of the complex pair, about 1.07
        assert np.linalg.norm(r.y_end - eq) > 5e-6


def test_band_and_bracket_preconditions():
    band = ManifoldSeedBand()
    assert band.seeds().shape == (30, 3)
    assert np.allclose(band.seeds()[:, 1], critical_manifold_y(0.27))
    assert count_returns(P_MAIN.with_(nu=0.00647), band) == 0
    assert count_returns(P_MAIN.with_(nu=0.00648), band) >= 1
    with pytest.raises(PredicateNotBracketed):
        detect_tangency(P_MAIN, 0.00640, 0.00645, band)
    with pytest.raises(ValueError):
        ManifoldSeedBand(n_seeds=1)
