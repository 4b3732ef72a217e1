"""Deterministic-equivalent layer.

Solves the self-consistent scalar equation for the limiting Stieltjes
transform ``m(z)``, evaluates the associated ``T(z)`` and ``w(z)`` maps,
characterizes the limiting spectral support through the non-negative local
extrema of ``phi``, checks the noise/signal separation conditions, and builds
the rectangular integration contour used by the bias-corrected estimator.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .errors import NoConvergence, PoleHit, SeparationViolated, SupportSearchFailed
from .model import Scenario

__all__ = [
    "DeterministicInput",
    "SupportProfile",
    "SeparationReport",
    "ContourSpec",
    "solve_canonical",
    "solve_canonical_with_derivative",
    "limit_to_real",
    "t_matrix",
    "w_of_z",
    "w_prime",
    "phi",
    "phi_prime",
    "find_support",
    "check_separation",
    "choose_contour",
]


@dataclass(frozen=True)
class DeterministicInput:
    """Population-side input: eigenvalues of ``B B*``, noise level and aspect ratio."""

    true_lambdas: np.ndarray
    sigma2: float
    c: float

    def __post_init__(self) -> None:
        lam = np.asarray(self.true_lambdas, dtype=float)
        if np.any(np.diff(lam) < 0):
            raise ValueError("true_lambdas must be ascending")
        if lam[0] < 0:
            raise ValueError("true_lambdas must be non-negative")
        if not 0 < self.c < 1:
            raise ValueError("need 0 < c < 1")
        if self.sigma2 <= 0:
            raise ValueError("sigma2 must be positive")
        object.__setattr__(self, "true_lambdas", lam)

    @classmethod
    def from_scenario(cls, scenario: Scenario) -> "DeterministicInput":
        return cls(
            true_lambdas=scenario.signal_gram_eigenvalues(),
            sigma2=scenario.sigma2,
            c=scenario.c,
        )

    @property
    def M(self) -> int:
        return len(self.true_lambdas)


@dataclass(frozen=True)
class SupportProfile:
    """Support clusters ``[x_q^-, x_q^+]`` with their preimages ``(w_q^-, w_q^+)``.

    ``association[k]`` is the (0-based) cluster index of the k-th eigenvalue
    of ``B B*``.
    """

    w_minus: np.ndarray
    w_plus: np.ndarray
    x_minus: np.ndarray
    x_plus: np.ndarray
    association: np.ndarray

    @property
    def Q(self) -> int:
        return len(self.w_minus)


@dataclass(frozen=True)
class SeparationReport:
    """Verdicts (not exceptions) for the two separation assumptions."""

    a5: bool
    a6: bool
    a5_margin: float
    a6_edge_margin: float
    a6_gap_margin: float

    @property
    def separated(self) -> bool:
        return self.a5 and self.a6


@dataclass(frozen=True)
class ContourSpec:
    """Thresholds, margin and height defining the rectangle around the noise cluster."""

    t1_minus: float
    t1_plus: float
    t2_minus: float
    t2_plus: float
    epsilon: float
    y: float

    def __post_init__(self) -> None:
        if not 0 < self.t1_minus < self.t1_plus < self.t2_minus < self.t2_plus:
            raise ValueError("thresholds must satisfy 0 < t1- < t1+ < t2- < t2+")
        if not 0 < self.epsilon < self.y / 3:
            raise ValueError("need 0 < epsilon < y/3")

    @property
    def x_lo(self) -> float:
        """Left abscissa of the rectangle."""
        return self.t1_minus - 3.0 * self.epsilon

    @property
    def x_hi(self) -> float:
        """Right abscissa of the rectangle."""
        return self.t1_plus + 3.0 * self.epsilon

    def in_bands(self, x: np.ndarray) -> np.ndarray:
        """Membership in the diagnostic band set around the two threshold intervals."""
        x = np.asarray(x, dtype=float)
        e = self.epsilon
        band1 = (x >= self.t1_minus - e) & (x <= self.t1_plus + e)
        band2 = (x >= self.t2_minus - e) & (x <= self.t2_plus + e)
        return band1 | band2


# ---------------------------------------------------------------------------
# canonical equation
# ---------------------------------------------------------------------------

def _iteration_step(lam, s2, c, z, m):
    b = 1.0 + s2 * c * m
    d = -z * b + s2 * (1.0 - c) + lam / b
    return np.mean(1.0 / d)


def _damped_solve(lam, s2, c, z, m0, tol=1e-13, maxit=10000, zeta=0.5):
    m = m0
    for _ in range(maxit):
        m_new = (1.0 - zeta) * m + zeta * _iteration_step(lam, s2, c, z, m)
        if abs(m_new - m) <= tol * max(1.0, abs(m_new)):
            return m_new, True
        m = m_new
    return m, False


def _newton_polish(lam, s2, c, z, m):
    for _ in range(60):
        b = 1.0 + s2 * c * m
        d = -z * b + s2 * (1.0 - c) + lam / b
        F = np.mean(1.0 / d)
        dd = -z * s2 * c - lam * s2 * c / b**2
        Fp = np.mean(-dd / d**2)
        step = (m - F) / (1.0 - Fp)
        m = m - step
        if abs(step) <= 1e-16 * max(1.0, abs(m)):
            break
    return m


def _residual(lam, s2, c, z, m):
    return abs(m - _iteration_step(lam, s2, c, z, m)) / max(1.0, abs(m))


def _solve_upper(lam, s2, c, z, m0=None):
    """Solve for Im z > 0, with optional warm start and continuation fallback."""
    if m0 is not None:
        m, ok = _damped_solve(lam, s2, c, z, m0, maxit=2000)
        if ok:
            m = _newton_polish(lam, s2, c, z, m)
            if m.imag > 0 and _residual(lam, s2, c, z, m) < 1e-12:
                return m
    # continuation in Im z from a safely large height down to the target
    y_target = z.imag
    y0 = max(1.0, 2.0 * abs(z))
    ys = [y0]
    while ys[-1] > y_target:
        ys.append(max(ys[-1] * 0.5, y_target))
    m = -1.0 / complex(z.real, y0)
    for y in ys:
        zs = complex(z.real, y)
        m, ok = _damped_solve(lam, s2, c, zs, m)
        if not ok:
            raise NoConvergence(f"canonical-equation iteration stalled at z = {zs}")
        m = _newton_polish(lam, s2, c, zs, m)
    if _residual(lam, s2, c, z, m) > 1e-12:
        raise NoConvergence(f"canonical-equation residual too large at z = {z}")
    return m


def solve_canonical(inp: DeterministicInput, z: complex, m0: complex | None = None) -> complex:
    """Stieltjes-class solution ``m(z)`` of the self-consistent equation.

    ``z`` must be off the real axis; real-axis values go through
    ``limit_to_real``.  ``m0`` optionally warm-starts the iteration (useful
    when sweeping ``z`` along a contour).
    """
    z = complex(z)
    if z.imag == 0:
        raise ValueError("Im z must be nonzero; use limit_to_real for real z")
    lam, s2, c = inp.true_lambdas, inp.sigma2, inp.c
    if z.imag < 0:
        m0c = np.conj(m0) if m0 is not None else None
        m = np.conj(_solve_upper(lam, s2, c, np.conj(z), m0c))
    else:
        m = _solve_upper(lam, s2, c, z, m0)
    if m.imag * z.imag <= 0:
        raise NoConvergence(f"solution at z = {z} left the Stieltjes class")
    if (1.0 + s2 * c * m).real < 0.5 - 1e-9:
        raise NoConvergence(f"Re(1 + sigma2 c m) < 1/2 at z = {z}")
    return complex(m)


def _m_derivative(inp: DeterministicInput, z: complex, m: complex) -> complex:
    """``m'(z)`` from implicit differentiation of the canonical equation."""
    lam, s2, c = inp.true_lambdas, inp.sigma2, inp.c
    b = 1.0 + s2 * c * m
    d = -z * b + s2 * (1.0 - c) + lam / b
    S2 = np.mean(1.0 / d**2)
    S3 = np.mean((z + lam / b**2) / d**2)
    return complex(b * S2 / (1.0 - s2 * c * S3))


def solve_canonical_with_derivative(
    inp: DeterministicInput, z: complex, m0: complex | None = None
) -> tuple[complex, complex]:
    """``(m(z), m'(z))`` at a point off the real axis."""
    m = solve_canonical(inp, z, m0=m0)
    return m, _m_derivative(inp, z, m)


def limit_to_real(inp: DeterministicInput, x: float) -> complex:
    """Boundary value ``m(x)`` obtained by continuation ``x + i h``, ``h -> 0``.

    ``h`` descends geometrically from 1 to 1e-9 with warm starts; the value at
    the final height is returned.  Outside the support the imaginary part of
    the result is below ~1e-6.
    """
    lam, s2, c = inp.true_lambdas, inp.sigma2, inp.c
    m = _solve_upper(lam, s2, c, complex(x, 1.0))
    h = 1.0
    while h > 1e-9:
        h = max(h * 0.5, 1e-9)
        z = complex(x, h)
        m, ok = _damped_solve(lam, s2, c, z, m)
        if not ok:
            raise NoConvergence(f"continuation to the real axis stalled at x = {x}")
        m = _newton_polish(lam, s2, c, z, m)
    return complex(m)


def t_matrix(inp: DeterministicInput, z: complex, m: complex) -> np.ndarray:
    """Deterministic-equivalent resolvent, diagonal in the eigenbasis of ``B B*``."""
    lam, s2, c = inp.true_lambdas, inp.sigma2, inp.c
    b = 1.0 + s2 * c * m
    entries = 1.0 / (-z * b + s2 * (1.0 - c) + lam / b)
    return np.diag(entries)


def w_of_z(inp: DeterministicInput, z: complex, m: complex | None = None) -> complex:
    """``w(z) = z b(z)^2 - sigma2 (1-c) b(z)`` with ``b = 1 + sigma2 c m(z)``."""
    if m is None:
        m = solve_canonical(inp, z)
    b = 1.0 + inp.sigma2 * inp.c * m
    return complex(z * b * b - inp.sigma2 * (1.0 - inp.c) * b)


def w_prime(inp: DeterministicInput, z: complex, m: complex, mp: complex) -> complex:
    """Derivative of ``w`` given ``m(z)`` and ``m'(z)``."""
    s2, c = inp.sigma2, inp.c
    b = 1.0 + s2 * c * m
    bp = s2 * c * mp
    return complex(b * b + 2.0 * z * b * bp - s2 * (1.0 - c) * bp)


# ---------------------------------------------------------------------------
# support characterization
# ---------------------------------------------------------------------------

def _phi_phip(lam, s2, c, w):
    """Vectorized phi and phi' over an array of points."""
    w = np.asarray(w, dtype=float)
    diff = lam[:, None] - w.reshape(1, -1)
    f = np.mean(1.0 / diff, axis=0)
    fp = np.mean(1.0 / diff**2, axis=0)
    u = 1.0 - s2 * c * f
    up = -s2 * c * fp
    val = w.ravel() * u**2 + s2 * (1.0 - c) * u
    der = u**2 + 2.0 * w.ravel() * u * up + s2 * (1.0 - c) * up
    return val.reshape(w.shape), der.reshape(w.shape)


def _check_not_pole(inp: DeterministicInput, w: float) -> None:
    scale = 1.0 + inp.true_lambdas[-1]
    if np.min(np.abs(inp.true_lambdas - w)) < 1e-14 * scale:
        raise PoleHit(f"w = {w} coincides with an eigenvalue of B B*")


def phi(inp: DeterministicInput, w: float) -> float:
    """``phi(w) = w (1 - sigma2 c f(w))^2 + sigma2 (1-c)(1 - sigma2 c f(w))``."""
    _check_not_pole(inp, w)
    val, _ = _phi_phip(inp.true_lambdas, inp.sigma2, inp.c, np.array([w]))
    return float(val[0])


def phi_prime(inp: DeterministicInput, w: float) -> float:
    """Analytic derivative of ``phi``."""
    _check_not_pole(inp, w)
    _, der = _phi_phip(inp.true_lambdas, inp.sigma2, inp.c, np.array([w]))
    return float(der[0])


def _interval_points(a: float, b: float, n: int) -> np.ndarray:
    """Open grid on (a, b), clustered toward both endpoints."""
    t = 0.5 * (1.0 - np.cos(np.linspace(0.0, np.pi, n + 2)[1:-1]))
    pts = a + (b - a) * t
    extra = (b - a) * np.power(10.0, -np.arange(3, 13, dtype=float))
    return np.unique(np.concatenate([pts, a + extra, b - extra]))


def _critical_points(lam, s2, c, intervals, n) -> np.ndarray:
    roots = []
    for a, b in intervals:
        pts = _interval_points(a, b, n)
        _, der = _phi_phip(lam, s2, c, pts)
        sign = np.sign(der)
        idx = np.nonzero(sign[:-1] * sign[1:] < 0)[0]
        for i in idx:
            fun = lambda w: _phi_phip(lam, s2, c, np.array([w]))[1][0]
            try:
                r = brentq(fun, pts[i], pts[i + 1], xtol=1e-300, rtol=8.9e-16)
            except ValueError:
                continue
            roots.append(r)
        roots.extend(pts[np.nonzero(der == 0.0)[0]])
    return np.sort(np.asarray(roots))


def find_support(inp: DeterministicInput, grid_density: int = 512) -> SupportProfile:
    """Locate the support clusters from the non-negative local extrema of ``phi``.

    Scans ``phi'`` on graded grids over every interval between distinct
    eigenvalues of ``B B*`` (plus one interval on each side of the spectrum),
    refines each sign change by bisection, retains the extrema with
    ``phi >= 0`` and pairs them into clusters.  The grid is doubled up to
    three times before giving up.
    """
    lam, s2, c = inp.true_lambdas, inp.sigma2, inp.c
    scale = 1.0 + lam[-1]
    distinct = [lam[0]]
    for x in lam[1:]:
        if x - distinct[-1] > 1e-12 * scale:
            distinct.append(x)
    distinct = np.asarray(distinct)

    w_left = 10.0 * s2 * np.sqrt(c) + 10.0 * (s2 + lam[-1])
    w_right = s2 * (1.0 + np.sqrt(c)) ** 2 + 1.0
    intervals = [(-w_left, distinct[0])]
    intervals += [(distinct[i], distinct[i + 1]) for i in range(len(distinct) - 1)]
    intervals.append((distinct[-1], distinct[-1] + w_right))

    n = grid_density
    last_error = "no extrema found"
    for _ in range(4):
        crit = _critical_points(lam, s2, c, intervals, n)
        if crit.size:
            vals, _ = _phi_phip(lam, s2, c, crit)
            keep_tol = 1e-12 * (1.0 + np.max(np.abs(vals)))
            keep = vals >= -keep_tol
            w_ext = crit[keep]
            x_ext = np.maximum(vals[keep], 0.0)
            profile, err = _pair_clusters(inp, w_ext, x_ext)
            if profile is not None:
                return profile
            last_error = err
        n *= 2
    raise SupportSearchFailed(last_error)


def _pair_clusters(inp, w_ext, x_ext):
    lam = inp.true_lambdas
    if w_ext.size == 0 or w_ext.size % 2 != 0:
        return None, f"{w_ext.size} retained extrema (expected a positive even count)"
    if not (w_ext[0] < 0.0 < w_ext[1]):
        return None, "ordering w_1^- < 0 < w_1^+ violated"
    w_minus, w_plus = w_ext[0::2], w_ext[1::2]
    x_minus, x_plus = x_ext[0::2], x_ext[1::2]
    tol = 1e-10 * (1.0 + x_plus[-1])
    if np.any(x_plus - x_minus <= -tol):
        return None, "cluster edges out of order (x_q^- > x_q^+)"
    if np.any(x_minus[1:] - x_plus[:-1] < -tol):
        return None, "overlapping clusters (x_{q+1}^- < x_q^+)"
    association = np.full(len(lam), -1, dtype=int)
    for k, val in enumerate(lam):
        inside = np.nonzero((w_minus < val) & (val < w_plus))[0]
        if len(inside) != 1:
            return None, f"eigenvalue {val} not associated to exactly one cluster"
        association[k] = inside[0]
    if association[0] != 0:
        return None, "eigenvalue 0 not associated to the first cluster"
    return SupportProfile(
        w_minus=w_minus, w_plus=w_plus, x_minus=x_minus, x_plus=x_plus,
        association=association,
    ), ""


def check_separation(profile: SupportProfile, inp: DeterministicInput, K: int) -> SeparationReport:
    """Verdicts for the two separation assumptions (no exceptions raised)."""
    M = inp.M
    if K == 0:
        a5, a5_margin = True, np.inf
    else:
        lam_signal_min = inp.true_lambdas[M - K]
        a5_margin = lam_signal_min - profile.w_plus[0]
        a5 = a5_margin > 0
    edge_margin = profile.x_minus[0]
    if profile.Q >= 2:
        gap_margin = profile.x_minus[1] - profile.x_plus[0]
    else:
        gap_margin = np.inf if K == 0 else -np.inf
    a6 = edge_margin > 0 and gap_margin > 0
    return SeparationReport(
        a5=a5, a6=a6, a5_margin=float(a5_margin),
        a6_edge_margin=float(edge_margin), a6_gap_margin=float(gap_margin),
    )


def choose_contour(
    profile: SupportProfile, report: SeparationReport | None = None, gamma: float = 0.25
) -> ContourSpec:
    """Thresholds and rectangle geometry around the first (noise) cluster.

    For a single-cluster profile (no sources) the contour simply encloses
    that cluster and the upper thresholds are synthetic.
    """
    if report is not None and not report.separated:
        raise SeparationViolated("separation verdicts must both hold")
    x1m, x1p = profile.x_minus[0], profile.x_plus[0]
    t1_minus = x1m * (1.0 - gamma)
    if profile.Q >= 2:
        g = profile.x_minus[1] - x1p
        if g <= 0:
            raise SeparationViolated("clusters 1 and 2 are not strictly separated")
        t1_plus = x1p + gamma * g
        t2_minus = profile.x_minus[1] - gamma * g
        t2_plus = profile.x_plus[-1] * (1.0 + gamma)
        epsilon = min(t1_minus, gamma * g) / 4.0
    else:
        t1_plus = x1p * (1.0 + gamma)
        t2_minus = t1_plus + gamma * x1p
        t2_plus = t2_minus + gamma * x1p
        epsilon = min(t1_minus, t1_plus - x1p) / 4.0
    y = max(3.5 * epsilon, (t1_plus - t1_minus) / 2.0)
    return ContourSpec(
        t1_minus=t1_minus, t1_plus=t1_plus, t2_minus=t2_minus, t2_plus=t2_plus,
        epsilon=epsilon, y=y,
    )
