"""Array/source scenarios, observation sampling and exact subspace ground truth.

The data model is the uniform linear array: ``K`` far-field sources with
directions ``theta_1 < ... < theta_K`` impinge on ``M`` sensors over ``N``
snapshots.  The normalized observation is ``Sigma = B + W`` with a
deterministic low-rank part ``B = A(theta) S / sqrt(N)`` and complex Gaussian
noise ``W`` of entrywise variance ``sigma2 / N``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import DegenerateSteering

__all__ = [
    "Scenario",
    "Observation",
    "GroundTruth",
    "steering",
    "steering_grid",
    "build_scenario",
    "sample_observation",
    "true_projector",
    "true_eta",
    "exp_sum_q",
]

_COND_LIMIT = 1e12
_RANK_RTOL = 1e-10


def steering(theta: float, M: int) -> np.ndarray:
    """Unit-norm steering vector ``(1, e^{i theta}, ..., e^{i(M-1) theta}) / sqrt(M)``."""
    if M < 1:
        raise ValueError("M must be >= 1")
    return np.exp(1j * theta * np.arange(M)) / np.sqrt(M)


def steering_grid(thetas: np.ndarray, M: int) -> np.ndarray:
    """Steering vectors for many angles at once, returned as an ``M x G`` matrix."""
    thetas = np.asarray(thetas, dtype=float)
    return np.exp(1j * np.outer(np.arange(M), thetas)) / np.sqrt(M)


@dataclass(frozen=True)
class Scenario:
    """Deterministic ground truth of one simulation setup.

    ``B`` is frozen at construction: regenerating a scenario from the same
    parameters and seed reproduces it exactly.
    """

    M: int
    N: int
    K: int
    angles: np.ndarray
    sigma2: float
    source_matrix: np.ndarray
    steering_matrix: np.ndarray
    B: np.ndarray
    norm_bound: float = 100.0

    def __post_init__(self) -> None:
        if not 0 < self.M < self.N:
            raise ValueError("need 0 < M < N (so that 0 < c_N < 1)")
        if not 0 <= self.K < self.M:
            raise ValueError("need 0 <= K < M")
        if len(np.unique(self.angles)) != self.K:
            raise ValueError("angles must be distinct")
        if self.sigma2 < 0:
            raise ValueError("sigma2 must be non-negative")
        s = np.linalg.svd(self.B, compute_uv=False)
        if self.K > 0:
            rank = int(np.sum(s > _RANK_RTOL * s[0]))
            if rank != self.K:
                raise ValueError(f"rank(B B*) = {rank}, expected {self.K}")
            if s[0] > self.norm_bound:
                raise ValueError(f"spectral norm of B ({s[0]:.3g}) exceeds bound")

    @property
    def c(self) -> float:
        return self.M / self.N

    def signal_gram_eigenvalues(self) -> np.ndarray:
        """All ``M`` eigenvalues of ``B B*`` in ascending order (first ``M - K`` are 0)."""
        s = np.linalg.svd(self.B, compute_uv=False)
        lam = np.sort(s**2)
        lam[: self.M - self.K] = 0.0
        return lam


@dataclass(frozen=True)
class Observation:
    """One noisy draw ``Sigma = B + W``; reproducible from its seed."""

    sigma_matrix: np.ndarray
    seed: int


@dataclass(frozen=True)
class GroundTruth:
    """Exact noise projector and the quadratic form it induces on steering vectors."""

    noise_projector: np.ndarray
    eta: Callable[[float], float] = field(repr=False)


def build_scenario(
    M: int,
    N: int,
    angles: Sequence[float],
    powers: Sequence[float] | None = None,
    sigma2: float = 1.0,
    seed: int = 0,
    norm_bound: float = 100.0,
) -> Scenario:
    """Build a scenario with a frozen deterministic source matrix.

    The source matrix has unit-modulus entries with uniform random phases,
    scaled by ``sqrt(power_k)`` per source, generated once from ``seed``
    (numpy PCG64 stream) and then treated as deterministic.  This makes the
    eigenvalues of ``B B*`` interpretable as per-source powers up to the
    steering-vector correlations.
    """
    angles = np.sort(np.asarray(angles, dtype=float))
    K = len(angles)
    if powers is None:
        powers = np.ones(K)
    powers = np.asarray(powers, dtype=float)
    if K and np.any(powers <= 0):
        raise ValueError("per-source powers must be positive")
    if len(powers) != K:
        raise ValueError("powers and angles must have the same length")

    A = steering_grid(angles, M) if K else np.zeros((M, 0), dtype=complex)
    rng = np.random.default_rng(seed)
    phases = rng.uniform(0.0, 2.0 * np.pi, size=(K, N))
    S = np.sqrt(powers)[:, None] * np.exp(1j * phases)
    B = (A @ S) / np.sqrt(N) if K else np.zeros((M, N), dtype=complex)
    return Scenario(
        M=M, N=N, K=K, angles=angles, sigma2=float(sigma2),
        source_matrix=S, steering_matrix=A, B=B, norm_bound=norm_bound,
    )


def sample_observation(scenario: Scenario, seed: int) -> Observation:
    """Draw ``Sigma = B + W`` with ``W`` i.i.d. complex ``CN(0, sigma2/N)``.

    The seed-to-stream mapping is fixed: a PCG64 generator seeded with
    ``seed`` produces a ``(2, M, N)`` standard-normal block; the first slice
    is the real part and the second the imaginary part, each scaled by
    ``sqrt(sigma2 / (2 N))``.
    """
    M, N = scenario.M, scenario.N
    rng = np.random.default_rng(seed)
    g = rng.standard_normal(size=(2, M, N))
    w_scale = np.sqrt(scenario.sigma2 / (2.0 * N))
    W = w_scale * (g[0] + 1j * g[1])
    return Observation(sigma_matrix=scenario.B + W, seed=seed)


def _projection_onto_signal(scenario: Scenario) -> np.ndarray:
    A = scenario.steering_matrix
    gram = A.conj().T @ A
    if np.linalg.cond(gram) > _COND_LIMIT:
        raise DegenerateSteering(
            f"condition number of A*A exceeds {_COND_LIMIT:.0e}"
        )
    return A @ np.linalg.solve(gram, A.conj().T)


def true_projector(scenario: Scenario) -> GroundTruth:
    """Orthogonal projector on the kernel of ``B B*`` and the exact eta function."""
    if scenario.K == 0:
        proj = np.eye(scenario.M, dtype=complex)
    else:
        proj = np.eye(scenario.M) - _projection_onto_signal(scenario)

    def eta(theta: float) -> float:
        a = steering(theta, scenario.M)
        return float(np.real(a.conj() @ proj @ a))

    return GroundTruth(noise_projector=proj, eta=eta)


def true_eta(scenario: Scenario, theta) -> float | np.ndarray:
    """Exact ``eta(theta) = 1 - a(theta)* A (A*A)^{-1} A* a(theta)``.

    Accepts a scalar angle or an array of angles.
    """
    if scenario.K == 0:
        return np.ones_like(np.asarray(theta, dtype=float)) if np.ndim(theta) else 1.0
    A = scenario.steering_matrix
    gram = A.conj().T @ A
    if np.linalg.cond(gram) > _COND_LIMIT:
        raise DegenerateSteering(
            f"condition number of A*A exceeds {_COND_LIMIT:.0e}"
        )
    a = steering_grid(np.atleast_1d(np.asarray(theta, dtype=float)), scenario.M)
    proj_part = A.conj().T @ a
    vals = 1.0 - np.real(np.sum(np.conj(proj_part) * np.linalg.solve(gram, proj_part), axis=0))
    return vals if np.ndim(theta) else float(vals[0])


def exp_sum_q(alpha: float, M: int) -> complex:
    """The normalized exponential sum ``(1/M) sum_{k=1}^{M} exp(-2 pi i k alpha)``."""
    if M < 1:
        raise ValueError("M must be >= 1")
    k = np.arange(1, M + 1)
    return complex(np.sum(np.exp(-2j * np.pi * k * alpha)) / M)
