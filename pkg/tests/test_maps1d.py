from __future__ import annotations

import math

import numpy as np
import pytest
from scipy.optimize import brentq

from slowfast.errors import NoSignChange, PredicateNotBracketed
from slowfast.integrator import Outcome
from slowfast.maps1d import (
    Map1DSample,
    Terminal,
    critical_itinerary,
    doubling_sequence,
    eval_R,
    find_critical_point,
    find_fixed_points,
    gap_runs,
    multiplier_crossing,
    orbit_diagram,
    periodic_windows,
    return_map,
    sample_R,
    saddle_node_scan,
    slope,
    superstable_windows,
)

from conftest import P_MAIN


def logistic(r):
    return lambda z: r * z * (1.0 - z)


def with_gap(f, lo, hi):
    return lambda z: math.nan if lo < z < hi else f(z)


# harness maps


def test_logistic_doubling_points():
    r1 = multiplier_crossing(logistic, 1, 2.9, 3.1, 0.65)
    assert r1 == pytest.approx(3.0, abs=1e-6)
    r2 = multiplier_crossing(logistic, 2, 3.4, 3.5, 0.84)
    assert r2 == pytest.approx(1.0 + math.sqrt(6.0), abs=1e-6)


def test_logistic_orbit_diagram():
    rows = orbit_diagram(logistic, 2.8, 3.9, 111, transient=3000, keep=64, window=(0.3, 0.7), threads=1)
    assert doubling_sequence(rows)[:3] == [1, 2, 4]
    first2 = next(r.nu for r in rows if r.period() == 2)
    assert 3.0 < first2 <= 3.1
    assert any(w.period == 3 and 3.82 < w.nu_lo < 3.85 for w in periodic_windows(rows))


def test_logistic_superstable_period3():
    # oracle: root of f^3(1/2) - 1/2 by brentq
    g = lambda r: logistic(r)(logistic(r)(logistic(r)(0.5))) - 0.5
    r3 = brentq(g, 3.83, 3.835, xtol=1e-14)
    found = superstable_windows(logistic, np.linspace(3.825, 3.84, 16), 3, window=(0.3, 0.7))
    assert len(found) == 1
    assert found[0] == pytest.approx(r3, abs=1e-9)


def test_parabola_critical_point():
    f = lambda z: 1.0 - 4.0 * (z - 0.5) ** 2
    assert find_critical_point(f, 0.0, 1.0) == pytest.approx(0.5, abs=1e-10)
    with pytest.raises(NoSignChange):
        find_critical_point(f, 0.6, 1.0)


def test_saddle_node_normal_form():
    fam = lambda mu: (lambda z: z + mu - z * z)
    lo, hi = saddle_node_scan(fam, -0.1, 0.1, (-0.5, 0.5), n=101, width=1e-10)
    assert hi - lo <= 1e-10
    assert lo <= 1e-10 and hi >= -1e-10
    with pytest.raises(PredicateNotBracketed):
        saddle_node_scan(fam, 0.01, 0.1, (-0.5, 0.5), n=101)


def test_identity_fixed_points():
    ident = lambda z: z
    S = sample_R(ident, 0.0, 1.0, 11, threads=1)
    fps = find_fixed_points(S, ident)
    # every sampled node is reported, refinement nodes included
    assert [z for z, _ in fps] == [s.z_in for s in S]
    assert all(s == pytest.approx(1.0) for _, s in fps)


def test_fixed_point_bisection_and_slope():
    f = lambda z: 2.0 - 3.0 * z  # fixed point 0.5, slope -3
    S = sample_R(f, 0.0, 1.0, 8, threads=1)
    [(z, s)] = find_fixed_points(S, f)
    assert abs(f(z) - z) < 1e-10
    assert s == pytest.approx(-3.0, rel=1e-6)
    with pytest.raises(ValueError):
        find_fixed_points(S)


def test_slope_step_halving():
    assert slope(math.sin, 0.3) == pytest.approx(math.cos(0.3), rel=1e-6)


def test_sampling_refines_at_gap_edges():
    f = with_gap(lambda z: 0.5 * z, 0.31, 0.52)
    S = sample_R(f, 0.0, 1.0, 11, threads=1)
    zs = [s.z_in for s in S]
    assert all(b > a for a, b in zip(zs[:-1], zs[1:]))
    assert len(S) > 11
    [(g0, g1)] = gap_runs(S)
    # three levels of factor-4 refinement pin the edges to 0.1/64
    assert 0.31 <= g0 < 0.31 + 0.1 / 64 + 1e-12
    assert 0.52 - 0.1 / 64 - 1e-12 < g1 <= 0.52
    assert all(s.gap is Outcome.TIMEOUT for s in S if s.z_out is None)


def test_sample_validation():
    with pytest.raises(ValueError):
        Map1DSample(0.1)
    with pytest.raises(ValueError):
        Map1DSample(0.1, math.inf)
    with pytest.raises(ValueError):
        sample_R(lambda z: z, 0, 1, 1)


def test_itinerary_terminals():
    f = lambda z: 0.5 * z + 0.02
    orb = critical_itinerary(f, 0.04)
    assert orb.terminal is Terminal.FIXED_POINT
    assert orb.iterates.tolist() == [0.04]
    centers, counts = orb.histogram()
    assert len(counts) == 1 and counts[0] == 1
    # the tent-like map sends everything past 0.9 into a gap
    g = with_gap(lambda z: 4.0 * z * (1.0 - z), 0.9, 2.0)
    orb = critical_itinerary(g, 0.3)
    assert orb.terminal is Terminal.HIT_GAP
    # the last recorded iterate is the one that lands in the gap
    assert orb.iterates[:-1].max() <= 0.9 < orb.iterates[-1]
    orb = critical_itinerary(logistic(3.2), 0.3, max_iter=50)
    assert orb.terminal is Terminal.MAX_ITERATES and len(orb.iterates) == 50


def test_histogram_bins_cover_iterates():
    orb = critical_itinerary(logistic(4.0), 0.1234, max_iter=5000)
    centers, counts = orb.histogram(100)
    assert counts.sum() == 5000
    assert len(centers) == 100
    assert np.count_nonzero(counts) > 50


# the system's map


def test_eval_R_bit_determinism():
    for z in (0.035, 0.045, 0.06):
        a = eval_R(P_MAIN, z)
        b = eval_R(P_MAIN, z)
        assert a == b
        c = return_map(P_MAIN).sample(z)
        assert c == a


def test_system_fixed_point_matches_dense_scan():
    f = return_map(P_MAIN)
    S = sample_R(f, 0.039, 0.042, 31)
    fps = find_fixed_points(S, f)
    assert len(fps) == 1
    z_star, s = fps[0]
    assert abs(f(z_star) - z_star) < 1e-10
    zs = np.linspace(z_star - 1e-4, z_star + 1e-4, 201)
    g = np.array([abs(f(z) - z) for z in zs])
    assert abs(zs[int(np.argmin(g))] - z_star) <= 1e-6
    assert abs(s) > 1.0


def test_system_critical_point_slope_signs():
    f = return_map(P_MAIN)
    c = find_critical_point(f)
    assert 0.0415 < c < 0.0455
    assert slope(f, c - 1e-4) * slope(f, c + 1e-4) < 0.0
