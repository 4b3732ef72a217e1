"""Scenario construction, sampling determinism, and exact ground truth."""
import numpy as np
import pytest

from rmtmusic import (
    DegenerateSteering,
    build_scenario,
    exp_sum_q,
    sample_observation,
    steering,
    steering_grid,
    true_eta,
    true_projector,
)


def test_steering_unit_norm():
    for M in (1, 4, 33):
        a = steering(0.7, M)
        assert np.isclose(np.linalg.norm(a), 1.0)
        assert np.isclose(a[0], 1.0 / np.sqrt(M))


def test_steering_grid_matches_columns():
    thetas = np.array([-1.0, 0.3, 2.5])
    A = steering_grid(thetas, 12)
    assert A.shape == (12, 3)
    for k, t in enumerate(thetas):
        assert np.allclose(A[:, k], steering(t, 12))


def test_build_scenario_reproducible():
    s1 = build_scenario(16, 32, (0.2, 0.5), (1.0, 2.0), sigma2=1.0, seed=5)
    s2 = build_scenario(16, 32, (0.2, 0.5), (1.0, 2.0), sigma2=1.0, seed=5)
    assert np.array_equal(s1.B, s2.B)
    s3 = build_scenario(16, 32, (0.2, 0.5), (1.0, 2.0), sigma2=1.0, seed=6)
    assert not np.array_equal(s1.B, s3.B)


def test_scenario_rank_and_aspect():
    sc = build_scenario(16, 32, (0.2, 0.5), seed=0)
    assert sc.c == 0.5
    lam = sc.signal_gram_eigenvalues()
    assert lam.shape == (16,)
    assert np.all(lam[:14] == 0.0)
    assert np.all(lam[14:] > 0.0)
    assert np.all(np.diff(lam) >= 0)


def test_scenario_validation():
    with pytest.raises(ValueError):
        build_scenario(32, 16, (0.2,))  # M >= N
    with pytest.raises(ValueError):
        build_scenario(16, 32, (0.2, 0.2))  # duplicate angles
    with pytest.raises(ValueError):
        build_scenario(16, 32, (0.2, 0.5), (1.0, -1.0))  # negative power


def test_sample_observation_documented_stream():
    sc = build_scenario(8, 16, (0.4,), sigma2=2.0, seed=1)
    obs = sample_observation(sc, seed=99)
    g = np.random.default_rng(99).standard_normal(size=(2, 8, 16))
    W = np.sqrt(2.0 / 32.0) * (g[0] + 1j * g[1])
    assert np.array_equal(obs.sigma_matrix, sc.B + W)


def test_noise_variance_scaling():
    sc = build_scenario(64, 128, (), sigma2=3.0, seed=0)
    obs = sample_observation(sc, seed=0)
    var = np.mean(np.abs(obs.sigma_matrix) ** 2)
    assert abs(var - 3.0 / 128.0) < 0.1 * 3.0 / 128.0


def test_true_eta_zero_at_sources():
    sc = build_scenario(20, 40, (-0.7, 0.9), seed=0)
    assert abs(true_eta(sc, -0.7)) < 1e-12
    assert abs(true_eta(sc, 0.9)) < 1e-12
    assert true_eta(sc, 2.0) > 0.1


def test_true_eta_vectorized_and_projector_agree():
    sc = build_scenario(20, 40, (-0.7, 0.9), seed=0)
    gt = true_projector(sc)
    grid = np.linspace(-np.pi, np.pi, 17)
    vals = true_eta(sc, grid)
    assert vals.shape == grid.shape
    for t, v in zip(grid, vals):
        assert np.isclose(v, gt.eta(t), atol=1e-12)


def test_true_eta_no_sources():
    sc = build_scenario(10, 20, (), seed=0)
    assert true_eta(sc, 0.3) == 1.0


def test_degenerate_steering_raises():
    # two angles closer than any resolvable spacing make A*A ill-conditioned
    sc = build_scenario(20, 40, (0.2, 0.2 + 1e-7), seed=0)
    with pytest.raises(DegenerateSteering):
        true_eta(sc, 0.0)


def test_exp_sum_q_closed_forms():
    assert np.isclose(exp_sum_q(0.0, 7), 1.0)
    # sum over all M-th roots of unity vanishes
    assert abs(exp_sum_q(1.0 / 8.0, 8)) < 1e-14
