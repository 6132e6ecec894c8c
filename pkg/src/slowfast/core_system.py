"""Vector field, Jacobian, equilibrium and its linear classification.

The system is integrated in slow time, so the fast equation carries the
``1/eps`` factor::

    x' = (y - x**2 - x**3) / eps
    y' = z - x
    z' = -nu - a*x - b*y - c*z
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from .errors import DegenerateSpectrum, NoEquilibriumInBracket, NoSignChange


@dataclass(frozen=True)
class Params:
    eps: float = 0.01
    nu: float = 0.00870134
    a: float = -0.3
    b: float = -1.0
    c: float = 1.0

    def __post_init__(self):
        for k in ("eps", "nu", "a", "b", "c"):
            object.__setattr__(self, k, float(getattr(self, k)))
        vals = (self.eps, self.nu, self.a, self.b, self.c)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"non-finite parameter in {vals}")
        if self.eps <= 0.0:
            raise ValueError(f"eps must be positive, got {self.eps}")

    def as_array(self) -> np.ndarray:
        return np.array([self.eps, self.nu, self.a, self.b, self.c], dtype=np.float64)

    def with_(self, **kw) -> "Params":
        return replace(self, **kw)


@dataclass(frozen=True)
class State:
    x: float
    y: float
    z: float

    def __post_init__(self):
        for k in ("x", "y", "z"):
            object.__setattr__(self, k, float(getattr(self, k)))
        if not all(math.isfinite(v) for v in (self.x, self.y, self.z)):
            raise ValueError(f"non-finite state ({self.x}, {self.y}, {self.z})")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=np.float64)

    @classmethod
    def of(cls, v) -> "State":
        if isinstance(v, State):
            return v
        x, y, z = (float(t) for t in v)
        return cls(x, y, z)


def _vec(s) -> np.ndarray:
    if isinstance(s, State):
        return s.as_array()
    return np.asarray(s, dtype=np.float64)


def vector_field(p: Params, s) -> np.ndarray:
    x, y, z = _vec(s)
    return np.array(
        [
            (y - x * x - x * x * x) / p.eps,
            z - x,
            -p.nu - p.a * x - p.b * y - p.c * z,
        ]
    )


def jacobian(p: Params, s) -> np.ndarray:
    x = _vec(s)[0]
    return np.array(
        [
            [(-2.0 * x - 3.0 * x * x) / p.eps, 1.0 / p.eps, 0.0],
            [-1.0, 0.0, 1.0],
            [-p.a, -p.b, -p.c],
        ]
    )


def _reduced(p: Params, x):
    # equilibria have y = x^2 + x^3 and z = x; substituting leaves this cubic
    return -p.nu - (p.a + p.c) * x - p.b * (x * x + x * x * x)


def find_equilibrium(p: Params, scan_step: float = 1e-3) -> State:
    """Equilibrium whose x-coordinate is the real root nearest 0 in [-1, 1]."""
    xs = np.linspace(-1.0, 1.0, int(round(2.0 / scan_step)) + 1)
    g = _reduced(p, xs)
    cands = []
    for i in range(len(xs) - 1):
        if g[i] == 0.0:
            cands.append((xs[i], xs[i]))
        elif g[i] * g[i + 1] < 0.0:
            cands.append((xs[i], xs[i + 1]))
    if g[-1] == 0.0:
        cands.append((xs[-1], xs[-1]))
    if not cands:
        raise NoEquilibriumInBracket(f"no sign change of the reduced cubic on [-1, 1] for {p}")

    roots = []
    for lo, hi in cands:
        if lo == hi:
            roots.append(lo)
            continue
        glo = _reduced(p, lo)
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            gm = _reduced(p, mid)
            if abs(gm) < 1e-14 or mid in (lo, hi):
                break
            if (gm < 0.0) == (glo < 0.0):
                lo, glo = mid, gm
            else:
                hi = mid
        roots.append(mid)
    x = min(roots, key=abs)
    return State(x, x * x + x * x * x, x)


class EquilibriumType(Enum):
    SADDLE_FOCUS = "SaddleFocus"
    OTHER = "Other"


@dataclass(frozen=True)
class EquilibriumInfo:
    location: State
    eigenvalues: tuple  # three complex numbers
    stable_eigvec: np.ndarray
    unstable_plane: tuple  # (u, w) spanning the complex-pair eigenspace
    type_tag: EquilibriumType

    @property
    def is_saddle_focus(self) -> bool:
        return self.type_tag is EquilibriumType.SADDLE_FOCUS


def _char_poly(J: np.ndarray) -> tuple[float, float, float]:
    """Coefficients (c2, c1, c0) of lambda^3 + c2 lambda^2 + c1 lambda + c0."""
    tr = J[0, 0] + J[1, 1] + J[2, 2]
    m2 = (
        J[0, 0] * J[1, 1] - J[0, 1] * J[1, 0]
        + J[0, 0] * J[2, 2] - J[0, 2] * J[2, 0]
        + J[1, 1] * J[2, 2] - J[1, 2] * J[2, 1]
    )
    det = float(np.linalg.det(J))
    return -tr, m2, -det


def cubic_roots(c2: float, c1: float, c0: float) -> list[complex]:
    """Roots of the monic cubic by Cardano's formula, polished by Newton steps."""
    # depressed cubic t^3 + P t + Q with lambda = t - c2/3
    shift = c2 / 3.0
    P = c1 - c2 * c2 / 3.0
    Q = 2.0 * c2 ** 3 / 27.0 - c2 * c1 / 3.0 + c0
    disc = (Q / 2.0) ** 2 + (P / 3.0) ** 3
    if disc >= 0.0:
        sq = math.sqrt(disc)
        u = math.copysign(abs(-Q / 2.0 + sq) ** (1.0 / 3.0), -Q / 2.0 + sq)
        v = math.copysign(abs(-Q / 2.0 - sq) ** (1.0 / 3.0), -Q / 2.0 - sq)
        w = complex(-0.5, math.sqrt(3.0) / 2.0)
        ts = [u + v, u * w + v * w.conjugate(), u * w.conjugate() + v * w]
    else:
        r = 2.0 * math.sqrt(-P / 3.0)
        phi = math.acos(max(-1.0, min(1.0, 3.0 * Q / (P * r))))
        ts = [r * math.cos((phi - 2.0 * math.pi * k) / 3.0) for k in range(3)]
        ts = [complex(t) for t in ts]

    roots = []
    for t in ts:
        lam = complex(t) - shift
        for _ in range(4):
            f = ((lam + c2) * lam + c1) * lam + c0
            df = (3.0 * lam + 2.0 * c2) * lam + c1
            if df == 0:
                break
            step = f / df
            lam -= step
            if abs(step) <= 1e-16 * max(1.0, abs(lam)):
                break
        roots.append(lam)
    # snap conjugate pairs and real roots
    out = []
    for lam in roots:
        if abs(lam.imag) <= 1e-12 * max(1.0, abs(lam.real)):
            lam = complex(lam.real, 0.0)
        out.append(lam)
    return sorted(out, key=lambda z: (z.real, z.imag))


def _inverse_iteration(J: np.ndarray, lam: complex, iters: int = 3) -> np.ndarray:
    n = J.shape[0]
    shift = lam + (1e-10 * max(1.0, abs(lam)))
    A = J.astype(complex) - shift * np.eye(n)
    v = np.ones(n, dtype=complex) / math.sqrt(n)
    for _ in range(iters):
        v = np.linalg.solve(A, v)
        v /= np.linalg.norm(v)
    # fix phase so the largest component is real positive
    k = int(np.argmax(np.abs(v)))
    v *= abs(v[k]) / v[k]
    return v


def classify_equilibrium(p: Params) -> EquilibriumInfo:
    eq = find_equilibrium(p)
    J = jacobian(p, eq)
    lams = cubic_roots(*_char_poly(J))
    for i in range(3):
        for j in range(i + 1, 3):
            if abs(lams[i] - lams[j]) < 1e-10:
                raise DegenerateSpectrum(f"repeated eigenvalue {lams[i]} at {p}")

    real = [l for l in lams if l.imag == 0.0]
    cplx = [l for l in lams if l.imag != 0.0]
    saddle_focus = (
        len(real) == 1 and real[0].real < 0.0 and len(cplx) == 2 and cplx[0].real > 0.0
    )

    if real:
        vs = _inverse_iteration(J, real[0]).real
        vs /= np.linalg.norm(vs)
    else:
        vs = np.full(3, np.nan)
    if cplx:
        lam = max(cplx, key=lambda z: z.imag)
        vc = _inverse_iteration(J, lam)
        u = vc.real / np.linalg.norm(vc.real)
        w = vc.imag / np.linalg.norm(vc.imag)
    else:
        u = w = np.full(3, np.nan)
    return EquilibriumInfo(
        location=eq,
        eigenvalues=tuple(lams),
        stable_eigvec=vs,
        unstable_plane=(u, w),
        type_tag=EquilibriumType.SADDLE_FOCUS if saddle_focus else EquilibriumType.OTHER,
    )


def pair_real_part(p: Params) -> float:
    """Real part of the complex-conjugate eigenvalue pair at the equilibrium (nan if none)."""
    eq = find_equilibrium(p)
    lams = cubic_roots(*_char_poly(jacobian(p, eq)))
    cplx = [l for l in lams if l.imag != 0.0]
    return cplx[0].real if cplx else math.nan


def hopf_scan(p: Params, nu_lo: float, nu_hi: float, tol: float = 1e-12) -> float:
    """Bisect on the sign of the pair's real part; returns nu_H."""
    r_lo = pair_real_part(p.with_(nu=nu_lo))
    r_hi = pair_real_part(p.with_(nu=nu_hi))
    if not (r_lo * r_hi < 0.0):
        raise NoSignChange(f"pair real part {r_lo} at nu={nu_lo}, {r_hi} at nu={nu_hi}")
    lo, hi = nu_lo, nu_hi
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        r = pair_real_part(p.with_(nu=mid))
        if math.isnan(r):
            raise NoSignChange(f"complex pair lost at nu={mid}")
        if abs(r) < tol or mid in (lo, hi):
            return mid
        if (r < 0.0) == (r_lo < 0.0):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
