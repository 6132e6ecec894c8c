from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import brentq

from slowfast.core_system import (
    EquilibriumType,
    Params,
    State,
    classify_equilibrium,
    cubic_roots,
    find_equilibrium,
    hopf_scan,
    jacobian,
    pair_real_part,
    vector_field,
)

from conftest import P_MAIN

finite = st.floats(-2.0, 2.0, allow_nan=False)


def test_vector_field_closed_form():
    p = Params(eps=0.1, nu=0.2, a=0.3, b=0.4, c=0.5)
    f = vector_field(p, (1.0, 2.0, 3.0))
    assert f == pytest.approx([(2.0 - 1.0 - 1.0) / 0.1, 3.0 - 1.0, -0.2 - 0.3 - 0.8 - 1.5])


@settings(max_examples=60, deadline=None)
@given(finite, finite, finite)
def test_jacobian_matches_finite_differences(x, y, z):
    s = np.array([x, y, z])
    J = jacobian(P_MAIN, s)
    h = 1e-6
    fd = np.empty((3, 3))
    for j in range(3):
        e = np.zeros(3)
        e[j] = h
        fd[:, j] = (vector_field(P_MAIN, s + e) - vector_field(P_MAIN, s - e)) / (2 * h)
    scale = max(1.0, np.abs(J).max())
    assert np.abs(J - fd).max() / scale < 1e-5


def test_params_reject_bad_values():
    with pytest.raises(ValueError):
        Params(eps=0.0)
    with pytest.raises(ValueError):
        Params(nu=math.nan)


def test_equilibrium_against_brentq():
    p = P_MAIN
    # on the equilibrium x = z and y = x^2 + x^3, leaving one cubic in x
    g = lambda x: -p.nu - p.a * x - p.b * (x * x + x ** 3) - p.c * x
    x_ref = brentq(g, -0.1, 0.1, xtol=1e-15)
    eq = find_equilibrium(p)
    assert eq.x == pytest.approx(x_ref, abs=1e-12)
    assert eq.z == pytest.approx(x_ref, abs=1e-12)
    assert np.linalg.norm(vector_field(p, eq)) < 1e-10


def test_classification_against_numpy_eigvals():
    info = classify_equilibrium(P_MAIN)
    ref = np.sort_complex(np.linalg.eigvals(jacobian(P_MAIN, info.location)))
    got = np.sort_complex(np.array(info.eigenvalues))
    assert np.allclose(got, ref, rtol=1e-9, atol=1e-9)
    assert info.type_tag is EquilibriumType.SADDLE_FOCUS
    # stable eigenvector is a unit eigenvector of the real negative eigenvalue
    lam = [l for l in info.eigenvalues if abs(l.imag) < 1e-12][0].real
    v = info.stable_eigvec
    assert lam < 0
    assert np.linalg.norm(v) == pytest.approx(1.0)
    assert np.linalg.norm(jacobian(P_MAIN, info.location) @ v - lam * v) < 1e-8


@settings(max_examples=80, deadline=None)
@given(st.floats(-5, 5), st.floats(-5, 5), st.floats(-5, 5))
def test_cubic_roots_against_numpy(c2, c1, c0):
    got = np.sort_complex(np.array(cubic_roots(c2, c1, c0)))
    ref = np.sort_complex(np.roots([1.0, c2, c1, c0]))
    # residual check is robust to clustered roots
    for r in got:
        assert abs(r ** 3 + c2 * r ** 2 + c1 * r + c0) < 1e-7 * max(1.0, abs(r) ** 3)
    assert len(got) == len(ref) == 3


def test_hopf_scan_brackets_zero_real_part():
    nu_h = hopf_scan(P_MAIN, 0.0, 0.00647)
    assert 0.0 < nu_h < 0.00647
    assert abs(pair_real_part(P_MAIN.with_(nu=nu_h))) < 1e-8
    # oracle: numpy eigenvalues on either side
    for d, sign in ((-1e-5, -1), (1e-5, 1)):
        p = P_MAIN.with_(nu=nu_h + d)
        ev = np.linalg.eigvals(jacobian(p, find_equilibrium(p)))
        re = max(l.real for l in ev if abs(l.imag) > 1e-9)
        assert np.sign(re) == sign


def test_state_roundtrip():
    s = State(1.0, 2.0, 3.0)
    assert State.of(s.as_array()) == s
