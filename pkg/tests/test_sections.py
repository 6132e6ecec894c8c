from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from slowfast.core_system import classify_equilibrium
from slowfast.errors import ProjectionDegenerate
from slowfast.integrator import Direction, Trajectory, integrate, z_section
from slowfast.manifolds import critical_manifold_y
from slowfast.sections import (
    LEFT,
    RIGHT,
    GridSpec,
    jump_direction,
    lift,
    max_height,
    tangency_line,
    winding_basis,
    winding_number,
    winding_of_states,
)

from conftest import P_MAIN, P_SAO

EQ = classify_equilibrium(P_MAIN)
BASIS = winding_basis(EQ)


def _path(theta, r=1e-2, axial=None):
    c, u, n = BASIS
    s = np.cross(u, n)
    ax = np.zeros_like(theta) if axial is None else axial
    return c + r * np.cos(theta)[:, None] * u + r * np.sin(theta)[:, None] * n + ax[:, None] * s


def _traj(states):
    t = np.arange(len(states), dtype=float)
    return Trajectory(t, states, np.zeros((len(states) - 1, 3, 4)))


def test_basis_is_orthonormal():
    _, u, n = BASIS
    assert np.linalg.norm(u) == pytest.approx(1.0)
    assert np.linalg.norm(n) == pytest.approx(1.0)
    assert abs(u @ n) < 1e-12
    assert abs(n @ EQ.stable_eigvec) < 1e-12


def test_one_revolution():
    w, k = winding_number(_traj(_path(np.linspace(0, 2 * np.pi, 400))), EQ)
    assert w == pytest.approx(1.0, abs=1e-12)
    assert k == 1


def test_motion_along_stable_axis_does_not_wind():
    th = np.linspace(0, 3 * np.pi, 300)
    assert winding_of_states(_path(th, axial=np.linspace(0, 0.5, 300)), BASIS) == pytest.approx(1.5, abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-3.0, 3.0), min_size=3, max_size=40), st.integers(1, 38))
def test_winding_additive_and_reversal_odd(steps, cut):
    th = np.concatenate([[0.0], np.cumsum(steps)])
    P = _path(th)
    cut = min(cut, len(P) - 2)
    w = winding_of_states(P, BASIS)
    assert winding_of_states(P[: cut + 1], BASIS) + winding_of_states(P[cut:], BASIS) == pytest.approx(w, abs=1e-9)
    assert winding_of_states(P[::-1], BASIS) == pytest.approx(-w, abs=1e-9)


def test_degenerate_projection():
    P = np.vstack([_path(np.array([0.0])), BASIS[0][None, :]])
    with pytest.raises(ProjectionDegenerate):
        winding_of_states(P, BASIS)


def test_kernel_winding_matches_mesh_winding():
    # the kernel accumulates winding on the fly; recompute from the stored mesh
    basis = winding_basis(classify_equilibrium(P_SAO))
    traj, out = integrate(P_SAO, (0.000553, 0.003065, 0.0), Direction.FORWARD, z_section(0.0), basis=basis)
    assert out.returned
    w_mesh = winding_of_states(traj.states, basis)
    assert out.stats.winding == pytest.approx(w_mesh, abs=1e-9)
    assert out.stats.y_max >= traj.states[:, 1].max()


@pytest.mark.parametrize("seed, turns", [((0.000553, 0.003065, 0.0), 4), ((0.000553, 0.000201, 0.0), 7)])
def test_small_oscillation_counts(seed, turns):
    eq = classify_equilibrium(P_SAO)
    traj, out = integrate(P_SAO, seed, Direction.FORWARD, z_section(0.0), basis=winding_basis(eq))
    assert out.returned
    assert winding_number(traj, eq)[1] == turns


def test_jump_direction():
    left = np.array([[0.0, 0.0, 0.0], [-1.0, 0.0, 0.0]])
    right = np.array([[0.0, 0.0, 0.0], [-0.1, 0.0, 0.0]])
    assert jump_direction(_traj(left)) == LEFT
    assert jump_direction(_traj(right)) == RIGHT


def test_max_height_constant_path():
    P = np.column_stack([np.linspace(0, 1, 10), np.full(10, 0.25), np.zeros(10)])
    assert max_height(_traj(P)) == 0.25


def test_max_height_sees_interpolant_peak():
    traj, _ = integrate(P_MAIN, (0.1, 0.05, 0.0), Direction.FORWARD, z_section(0.0, t_max=5.0))
    fine = np.array([traj.interpolate(t)[1] for t in np.linspace(traj.times[0], traj.times[-1], 20001)])
    assert max_height(traj) >= fine.max() - 1e-12


def test_left_jump_climbs_to_the_fold():
    # a left jump follows the far sheet up to the lower fold, at height y(-2/3)
    traj, out = integrate(P_MAIN, (-0.05344, 0.00187, 0.0), Direction.FORWARD, z_section(0.0))
    if jump_direction(traj) == LEFT:
        assert max_height(traj) >= critical_manifold_y(-2.0 / 3.0) - 0.01
    assert critical_manifold_y(-2.0 / 3.0) == pytest.approx(4.0 / 27.0)


def test_tangency_line_zeroes_zdot(rng):
    a, b, c = tangency_line(P_MAIN)
    for x in rng.uniform(-0.1, 0.1, 20):
        y = (c - a * x) / b
        zdot = -P_MAIN.nu - P_MAIN.a * x - P_MAIN.b * y - P_MAIN.c * 0.0
        assert abs(zdot) < 1e-15


def test_grid_nodes_row_major():
    g = GridSpec((0.0, 1.0, 10.0, 12.0), (3, 2))
    assert g.nodes().tolist() == [[0, 10], [0.5, 10], [1, 10], [0, 12], [0.5, 12], [1, 12]]
    with pytest.raises(ValueError):
        GridSpec((0.0, 1.0, 0.0, 1.0), (1, 5))


def test_lift_places_level():
    assert lift(z_section(0.0), (1.0, 2.0)).tolist() == [1.0, 2.0, 0.0]
