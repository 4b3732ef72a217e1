"""Empirical spectral machinery.

Eigendecomposition of ``Sigma Sigma*``, the empirical Stieltjes transform and
its derivative, and the secular roots ``omega_k`` of
``1 + sigma2 c m(z) = 0``, which coincide with the eigenvalues of the rank-one
update ``Lambda + (sigma2 c / M) 11^T``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericalFailure, PoleHit
from .model import Observation

__all__ = [
    "SpectralDecomposition",
    "decompose",
    "empirical_stieltjes",
    "secular_roots",
    "b_hat",
    "w_hat",
    "g_hat",
]


@dataclass(frozen=True)
class SpectralDecomposition:
    """Eigenpairs of ``Sigma Sigma*`` plus the associated secular roots.

    ``lambdas`` and ``omegas`` are ascending; ``vectors[:, k]`` is the
    eigenvector for ``lambdas[k]``.
    """

    lambdas: np.ndarray
    vectors: np.ndarray
    omegas: np.ndarray
    c: float
    sigma2: float

    @property
    def M(self) -> int:
        return len(self.lambdas)

    @property
    def rho(self) -> float:
        """Rank-one update weight ``sigma2 * c``."""
        return self.sigma2 * self.c


def decompose(observation: Observation, sigma2: float) -> SpectralDecomposition:
    """Eigendecomposition of ``Sigma Sigma*`` via the SVD of ``Sigma``.

    Working on ``Sigma`` rather than forming ``Sigma Sigma*`` halves the
    condition number.  Eigenvalues are the squared singular values, sorted
    ascending.
    """
    sigma = observation.sigma_matrix
    M, N = sigma.shape
    if M >= N:
        raise ValueError("Sigma must be M x N with M < N")
    try:
        U, s, _ = np.linalg.svd(sigma, full_matrices=True)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure("SVD of Sigma did not converge") from exc
    lambdas = s[::-1] ** 2
    vectors = U[:, ::-1]
    c = M / N
    if sigma2 > 0:
        omegas = secular_roots(lambdas, sigma2 * c)
    else:
        omegas = lambdas.copy()
    return SpectralDecomposition(
        lambdas=lambdas, vectors=vectors, omegas=omegas, c=c, sigma2=float(sigma2)
    )


def _check_pole(lambdas: np.ndarray, z: complex) -> None:
    scale = 1.0 + lambdas[-1]
    if np.min(np.abs(lambdas - z)) < 1e-14 * scale:
        raise PoleHit(f"z = {z} is within 1e-14*(1+lambda_max) of an eigenvalue")


def empirical_stieltjes(spec: SpectralDecomposition, z: complex) -> tuple[complex, complex]:
    """Empirical Stieltjes transform ``m(z)`` and its derivative ``m'(z)``."""
    _check_pole(spec.lambdas, z)
    inv = 1.0 / (spec.lambdas - z)
    return complex(np.mean(inv)), complex(np.mean(inv**2))


def secular_roots(lambdas: np.ndarray, rho: float) -> np.ndarray:
    """All ``M`` solutions of ``1 + rho * (1/M) sum_k 1/(lambda_k - x) = 0``.

    Between consecutive distinct eigenvalues the secular function is strictly
    increasing from -inf to +inf, so bisection inside each gap is globally
    safe; a final Newton polish brings the roots to ~1e-15 relative accuracy.
    Eigenvalues equal to within ``1e-12 * (1 + lambda_max)`` are treated as a
    single pole of multiplicity ``p``, contributing ``p - 1`` roots equal to
    the pole exactly.
    """
    lam = np.sort(np.asarray(lambdas, dtype=float))
    M = lam.size
    if rho <= 0:
        raise ValueError("rho must be positive")
    scale = 1.0 + abs(lam[-1])
    tol = 1e-12 * scale

    # collapse numerically equal eigenvalues into weighted poles
    d = [lam[0]]
    cnt = [1]
    for x in lam[1:]:
        if x - d[-1] <= tol:
            cnt[-1] += 1
        else:
            d.append(x)
            cnt.append(1)
    d = np.asarray(d)
    cnt = np.asarray(cnt, dtype=float)
    repeated = np.repeat(d, (cnt - 1).astype(int))

    lo = d.copy()
    hi = np.append(d[1:], d[-1] + rho * (1.0 + 1e-12) + tol)

    def fval(x: np.ndarray) -> np.ndarray:
        # x: one point per gap; avoid evaluating at the poles themselves
        return 1.0 + (rho / M) * np.sum(cnt[:, None] / (d[:, None] - x[None, :]), axis=0)

    a, b = lo.copy(), hi.copy()
    for _ in range(90):
        mid = 0.5 * (a + b)
        neg = fval(mid) < 0.0
        a = np.where(neg, mid, a)
        b = np.where(neg, b, mid)
    roots = 0.5 * (a + b)

    # Newton polish (guarded to stay inside the brackets)
    for _ in range(3):
        diff = d[:, None] - roots[None, :]
        f = 1.0 + (rho / M) * np.sum(cnt[:, None] / diff, axis=0)
        fp = (rho / M) * np.sum(cnt[:, None] / diff**2, axis=0)
        step = f / fp
        cand = roots - step
        ok = (cand > lo) & (cand < hi)
        roots = np.where(ok, cand, roots)

    return np.sort(np.concatenate([repeated, roots]))


def b_hat(spec: SpectralDecomposition, z: complex) -> complex:
    """``1 + sigma2 c m(z)`` for the empirical Stieltjes transform."""
    m, _ = empirical_stieltjes(spec, z)
    return 1.0 + spec.rho * m


def w_hat(spec: SpectralDecomposition, z: complex) -> complex:
    """``z b(z)^2 - sigma2 (1 - c) b(z)`` with ``b = 1 + sigma2 c m``."""
    b = b_hat(spec, z)
    return z * b * b - spec.sigma2 * (1.0 - spec.c) * b


def g_hat(spec: SpectralDecomposition, z: complex) -> complex:
    """``w'(z) / b(z)`` evaluated through the algebraic identity.

    Differentiating ``w = z b^2 - sigma2 (1-c) b`` and dividing by ``b`` gives
    ``g = b + 2 sigma2 c z m' - sigma2^2 c (1-c) m' / b``.
    """
    m, mp = empirical_stieltjes(spec, z)
    s2, c = spec.sigma2, spec.c
    b = 1.0 + s2 * c * m
    return b + 2.0 * s2 * c * z * mp - s2 * s2 * c * (1.0 - c) * mp / b


def g_hat_many(spec: SpectralDecomposition, z: np.ndarray) -> np.ndarray:
    """Vectorized ``g_hat`` over an array of points (no pole-distance check)."""
    z = np.asarray(z, dtype=complex)
    diff = spec.lambdas[:, None] - z.reshape(1, -1)
    m = np.mean(1.0 / diff, axis=0)
    mp = np.mean(1.0 / diff**2, axis=0)
    s2, c = spec.sigma2, spec.c
    b = 1.0 + s2 * c * m
    g = b + 2.0 * s2 * c * z.ravel() * mp - s2 * s2 * c * (1.0 - c) * mp / b
    return g.reshape(z.shape)
