"""Compiled Dormand-Prince 5(4) kernel with event location and trajectory statistics.

Everything here runs in numba nopython mode. The public wrappers live in
:mod:`slowfast.integrator`; this module only knows about flat arrays.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit

# status codes
RETURNED = 0
CAPTURED = 1
UNBOUNDED = 2
TIMEOUT = 3
UNDERFLOW = 4

# Dormand-Prince tableau
C2, C3, C4, C5 = 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0
A21 = 1.0 / 5.0
A31, A32 = 3.0 / 40.0, 9.0 / 40.0
A41, A42, A43 = 44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0
A51, A52, A53, A54 = 19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0
A61, A62, A63, A64, A65 = (
    9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0
)
B1, B3, B4, B5, B6 = 35.0 / 384.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0
E1, E3, E4, E5, E6, E7 = (
    71.0 / 57600.0, -71.0 / 16695.0, 71.0 / 1920.0, -17253.0 / 339200.0, 22.0 / 525.0, -1.0 / 40.0
)

# Shampine's quartic continuous extension, rows = stages, cols = powers theta^1..theta^4
DENSE_P = np.array(
    [
        [1.0, -8048581381.0 / 2820520608.0, 8663915743.0 / 2820520608.0, -12715105075.0 / 11282082432.0],
        [0.0, 0.0, 0.0, 0.0],
        [0.0, 131558114200.0 / 32700410799.0, -68118460800.0 / 10900136933.0, 87487479700.0 / 32700410799.0],
        [0.0, -1754552775.0 / 470086768.0, 14199869525.0 / 1410260304.0, -10690763975.0 / 1880347072.0],
        [0.0, 127303824393.0 / 49829197408.0, -318862633887.0 / 49829197408.0, 701980252875.0 / 199316789632.0],
        [0.0, -282668133.0 / 205662961.0, 2019193451.0 / 616988883.0, -1453857185.0 / 822651844.0],
        [0.0, 40617522.0 / 29380423.0, -110615467.0 / 29380423.0, 69997945.0 / 29380423.0],
    ]
)

SAFETY = 0.9
BETA = 0.04
EXPO1 = 0.2 - BETA * 0.75
FAC_MIN = 0.2  # max shrink 5x
FAC_MAX = 10.0


MODEL_SLOWFAST = 0
MODEL_LINEAR = 1


@njit(cache=True, nogil=True)
def rhs(model, prm, s, out):
    if model == MODEL_LINEAR:
        # decoupled linear test system, rates in prm[0:3]
        for i in range(3):
            out[i] = prm[i] * s[i]
        return
    eps, nu, a, b, c = prm[0], prm[1], prm[2], prm[3], prm[4]
    x, y, z = s[0], s[1], s[2]
    out[0] = (y - x * x - x * x * x) / eps
    out[1] = z - x
    out[2] = -nu - a * x - b * y - c * z


@njit(cache=True, nogil=True)
def dense_coeffs(K, h, Q):
    """Q[i, j] multiplies theta^(j+1); K is (7, 3)."""
    for i in range(3):
        for j in range(4):
            acc = 0.0
            for k in range(7):
                acc += K[k, i] * DENSE_P[k, j]
            Q[i, j] = h * acc


@njit(cache=True, nogil=True)
def dense_eval(y_old, Q, theta, out):
    for i in range(3):
        p = theta
        acc = 0.0
        for j in range(4):
            acc += Q[i, j] * p
            p *= theta
        out[i] = y_old[i] + acc


@njit(cache=True, nogil=True)
def _dense_deriv_comp(Q, i, theta):
    # d/dtheta of the interpolant component i
    return Q[i, 0] + 2.0 * Q[i, 1] * theta + 3.0 * Q[i, 2] * theta * theta + 4.0 * Q[i, 3] * theta ** 3


@njit(cache=True, nogil=True)
def _err_norm(y, y_new, err, rtol, atol):
    acc = 0.0
    for i in range(3):
        sc = atol + rtol * max(abs(y[i]), abs(y_new[i]))
        r = err[i] / sc
        acc += r * r
    return math.sqrt(acc / 3.0)


@njit(cache=True, nogil=True)
def _initial_step(model, prm, y0, f0, direction, rtol, atol, h_max):
    d0 = 0.0
    d1 = 0.0
    for i in range(3):
        sc = atol + rtol * abs(y0[i])
        d0 += (y0[i] / sc) ** 2
        d1 += (f0[i] / sc) ** 2
    d0 = math.sqrt(d0 / 3.0)
    d1 = math.sqrt(d1 / 3.0)
    if d0 < 1e-5 or d1 < 1e-5:
        h0 = 1e-6
    else:
        h0 = 0.01 * d0 / d1
    h0 = min(h0, h_max)
    y1 = np.empty(3)
    f1 = np.empty(3)
    for i in range(3):
        y1[i] = y0[i] + direction * h0 * f0[i]
    rhs(model, prm, y1, f1)
    d2 = 0.0
    for i in range(3):
        sc = atol + rtol * abs(y0[i])
        d2 += ((f1[i] - f0[i]) / sc) ** 2
    d2 = math.sqrt(d2 / 3.0) / h0
    if d1 <= 1e-15 and d2 <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** 0.2
    return min(100.0 * h0, h1, h_max)


@njit(cache=True, nogil=True)
def _gval(normal, level, s):
    return normal[0] * s[0] + normal[1] * s[1] + normal[2] * s[2] - level


@njit(cache=True, nogil=True)
def _grow2(a, n):
    b = np.empty((a.shape[0] * 2, a.shape[1]))
    b[:n] = a[:n]
    return b


@njit(cache=True, nogil=True)
def _grow3(a, n):
    b = np.empty((a.shape[0] * 2, a.shape[1], a.shape[2]))
    b[:n] = a[:n]
    return b


@njit(cache=True, nogil=True)
def _grow1(a, n):
    b = np.empty(a.shape[0] * 2)
    b[:n] = a[:n]
    return b


@njit(cache=True, nogil=True)
def run(
    model,
    prm,
    y0,
    direction,
    normal,
    level,
    orient,
    count,
    guard,
    escape_radius,
    t_max,
    rtol,
    atol,
    h_max,
    cap_anchor,
    cap_normal,
    cap_tube,
    cap_hits,
    basis,
    record,
):
    """Integrate one trajectory.

    Returns ``(status, t_end, y_end, n_hits, last_hit, last_hit_t, winding,
    y_max, x_min, ts, ys, qs, n_rec)``. ``winding`` is in radians. When
    ``record`` is False the mesh arrays are length-1 placeholders.
    """
    y = y0.copy()
    t = 0.0
    K = np.empty((7, 3))
    f = np.empty(3)
    rhs(model, prm, y, f)
    h = _initial_step(model, prm, y, f, direction, rtol, atol, h_max)

    ys_tmp = np.empty(3)
    y_new = np.empty(3)
    err = np.empty(3)
    Q = np.empty((3, 4))
    probe = np.empty(3)
    y_prev = np.empty(3)
    hit = np.empty(3)
    last_hit = np.full(3, np.nan)
    last_hit_t = np.nan

    cap = 1024 if record else 1
    ts = np.empty(cap)
    ys = np.empty((cap, 3))
    qs = np.empty((cap, 3, 4))
    n_rec = 0
    if record:
        ts[0] = 0.0
        ys[0] = y
        n_rec = 1

    n_hits = 0
    armed = guard <= 0.0
    g_old = _gval(normal, level, y)
    if not armed and abs(g_old) > guard:
        armed = True

    center = basis[0]
    u_ax = basis[1]
    n_ax = basis[2]
    do_wind = basis[1, 0] != 0.0 or basis[1, 1] != 0.0 or basis[1, 2] != 0.0
    winding = 0.0
    ang_old = 0.0
    if do_wind:
        du = 0.0
        dn = 0.0
        for i in range(3):
            du += (y[i] - center[i]) * u_ax[i]
            dn += (y[i] - center[i]) * n_ax[i]
        ang_old = math.atan2(dn, du)

    y_max = y[1]
    x_min = y[0]

    use_cap = cap_normal[0] != 0.0 or cap_normal[1] != 0.0 or cap_normal[2] != 0.0
    cap_level = _gval(cap_normal, 0.0, cap_anchor)
    gc_old = _gval(cap_normal, cap_level, y)
    cap_prev = 1e300
    cap_run = 0

    err_old = 1e-4
    rejected = False
    status = TIMEOUT
    while True:
        if h < 1e-14:
            status = UNDERFLOW
            break
        remaining = t_max - t
        h_step = min(h, remaining)
        if h_step <= 0.0:
            status = TIMEOUT
            break
        hs = direction * h_step
        # stages
        for i in range(3):
            K[0, i] = f[i]
        for i in range(3):
            ys_tmp[i] = y[i] + hs * A21 * K[0, i]
        rhs(model, prm, ys_tmp, f)
        K[1] = f
        for i in range(3):
            ys_tmp[i] = y[i] + hs * (A31 * K[0, i] + A32 * K[1, i])
        rhs(model, prm, ys_tmp, f)
        K[2] = f
        for i in range(3):
            ys_tmp[i] = y[i] + hs * (A41 * K[0, i] + A42 * K[1, i] + A43 * K[2, i])
        rhs(model, prm, ys_tmp, f)
        K[3] = f
        for i in range(3):
            ys_tmp[i] = y[i] + hs * (A51 * K[0, i] + A52 * K[1, i] + A53 * K[2, i] + A54 * K[3, i])
        rhs(model, prm, ys_tmp, f)
        K[4] = f
        for i in range(3):
            ys_tmp[i] = y[i] + hs * (
                A61 * K[0, i] + A62 * K[1, i] + A63 * K[2, i] + A64 * K[3, i] + A65 * K[4, i]
            )
        rhs(model, prm, ys_tmp, f)
        K[5] = f
        for i in range(3):
            y_new[i] = y[i] + hs * (
                B1 * K[0, i] + B3 * K[2, i] + B4 * K[3, i] + B5 * K[4, i] + B6 * K[5, i]
            )
        rhs(model, prm, y_new, f)
        K[6] = f
        for i in range(3):
            err[i] = hs * (
                E1 * K[0, i] + E3 * K[2, i] + E4 * K[3, i] + E5 * K[4, i] + E6 * K[5, i] + E7 * K[6, i]
            )
        en = _err_norm(y, y_new, err, rtol, atol)

        if en > 1.0:
            fac11 = en ** EXPO1
            h = h_step / min(1.0 / FAC_MIN, fac11 / SAFETY)
            rejected = True
            for i in range(3):
                f[i] = K[0, i]
            continue

        # accepted step
        fac11 = en ** EXPO1 if en > 0.0 else 0.0
        fac = fac11 / err_old ** BETA
        fac = max(1.0 / FAC_MAX, min(1.0 / FAC_MIN, fac / SAFETY))
        h_next = h_step / fac if fac > 0.0 else h_step * FAC_MAX
        if rejected:
            h_next = min(h_next, h_step)
        h_next = min(h_next, h_max)
        err_old = max(en, 1e-4)
        rejected = False

        dense_coeffs(K, hs, Q)
        t_new = t + h_step

        # max height, including interpolant extrema of y inside the step
        if y_new[1] > y_max:
            y_max = y_new[1]
        d_lo = _dense_deriv_comp(Q, 1, 0.0) * direction
        d_hi = _dense_deriv_comp(Q, 1, 1.0) * direction
        if d_lo > 0.0 and d_hi < 0.0:
            lo = 0.0
            hi = 1.0
            for _ in range(60):
                mid = 0.5 * (lo + hi)
                if _dense_deriv_comp(Q, 1, mid) * direction > 0.0:
                    lo = mid
                else:
                    hi = mid
            dense_eval(y, Q, 0.5 * (lo + hi), probe)
            if probe[1] > y_max:
                y_max = probe[1]
        if y_new[0] < x_min:
            x_min = y_new[0]

        # section event
        g_new = _gval(normal, level, y_new)
        event_done = False
        if armed:
            crossed = (g_old < 0.0 and g_new >= 0.0) or (g_old > 0.0 and g_new <= 0.0)
            if crossed:
                rising = (g_new - g_old) * direction > 0.0
                if orient == 0 or (orient > 0 and rising) or (orient < 0 and not rising):
                    lo = 0.0
                    hi = 1.0
                    th = 1.0
                    for _ in range(80):
                        th = 0.5 * (lo + hi)
                        dense_eval(y, Q, th, hit)
                        gm = _gval(normal, level, hit)
                        if abs(gm) < 1e-12:
                            break
                        if (gm < 0.0) == (g_old < 0.0):
                            lo = th
                        else:
                            hi = th
                    n_hits += 1
                    for i in range(3):
                        last_hit[i] = hit[i]
                    last_hit_t = t + th * h_step
                    if n_hits >= count:
                        event_done = True
        elif abs(g_new) > guard:
            armed = True
        g_old = g_new

        if event_done:
            # truncate the step at the crossing
            th_hit = (last_hit_t - t) / h_step
            if do_wind:
                du = 0.0
                dn = 0.0
                for i in range(3):
                    du += (last_hit[i] - center[i]) * u_ax[i]
                    dn += (last_hit[i] - center[i]) * n_ax[i]
                ang = math.atan2(dn, du)
                d_ang = ang - ang_old
                while d_ang > math.pi:
                    d_ang -= 2.0 * math.pi
                while d_ang <= -math.pi:
                    d_ang += 2.0 * math.pi
                winding += d_ang
            if record:
                if n_rec >= ts.shape[0]:
                    ts = _grow1(ts, n_rec)
                    ys = _grow2(ys, n_rec)
                    qs = _grow3(qs, n_rec)
                # rescale the interpolant onto the shortened step
                for i in range(3):
                    p = th_hit
                    for j in range(4):
                        qs[n_rec - 1, i, j] = Q[i, j] * p
                        p *= th_hit
                ts[n_rec] = direction * last_hit_t
                ys[n_rec] = last_hit
                n_rec += 1
            t = last_hit_t
            for i in range(3):
                y[i] = last_hit[i]
            status = RETURNED
            break

        if do_wind:
            du = 0.0
            dn = 0.0
            for i in range(3):
                du += (y_new[i] - center[i]) * u_ax[i]
                dn += (y_new[i] - center[i]) * n_ax[i]
            ang = math.atan2(dn, du)
            d_ang = ang - ang_old
            while d_ang > math.pi:
                d_ang -= 2.0 * math.pi
            while d_ang <= -math.pi:
                d_ang += 2.0 * math.pi
            winding += d_ang
            ang_old = ang

        if record:
            if n_rec >= ts.shape[0]:
                ts = _grow1(ts, n_rec)
                ys = _grow2(ys, n_rec)
                qs = _grow3(qs, n_rec)
            qs[n_rec - 1] = Q
            ts[n_rec] = direction * t_new
            ys[n_rec] = y_new
            n_rec += 1

        for i in range(3):
            y_prev[i] = y[i]
            y[i] = y_new[i]
        t = t_new
        h = h_next

        nrm = math.sqrt(y[0] * y[0] + y[1] * y[1] + y[2] * y[2])
        if nrm > escape_radius or not math.isfinite(nrm):
            status = UNBOUNDED
            break

        if use_cap:
            # oriented hits of the plane through the cycle anchor; a run of
            # strictly contracting hits inside the tube counts as capture
            gc_new = _gval(cap_normal, cap_level, y)
            if gc_old < 0.0 and gc_new >= 0.0 and direction > 0.0:
                lo = 0.0
                hi = 1.0
                for _ in range(60):
                    th = 0.5 * (lo + hi)
                    dense_eval(y_prev, Q, th, probe)
                    gm = _gval(cap_normal, cap_level, probe)
                    if abs(gm) < 1e-13:
                        break
                    if gm < 0.0:
                        lo = th
                    else:
                        hi = th
                d = 0.0
                for i in range(3):
                    d += (probe[i] - cap_anchor[i]) ** 2
                d = math.sqrt(d)
                if d < cap_tube:
                    # contracting, or already on the cycle to within noise
                    if cap_prev < 1e299 and (d < cap_prev or d < 1e-7):
                        cap_run += 1
                    else:
                        cap_run = 0
                    cap_prev = d
                    if cap_run >= cap_hits:
                        status = CAPTURED
                        break
                else:
                    cap_run = 0
                    cap_prev = 1e300
            gc_old = gc_new

        if t >= t_max:
            status = TIMEOUT
            break

    return (
        status,
        direction * t,
        y,
        n_hits,
        last_hit,
        direction * last_hit_t,
        winding,
        y_max,
        x_min,
        ts[:n_rec],
        ys[:n_rec],
        qs[: max(n_rec - 1, 0)],
        n_rec,
    )
