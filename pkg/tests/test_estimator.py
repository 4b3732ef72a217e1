"""Contour weights, pseudo-spectra, and DoA extraction."""
import numpy as np
import pytest

from rmtmusic import (
    DeterministicInput,
    EmptyInterval,
    PoleTooClose,
    TooFewMinima,
    build_scenario,
    check_separation,
    choose_contour,
    classical_eta,
    decompose,
    default_grid,
    deterministic_weights,
    extract_doas_intervals,
    extract_doas_topk,
    find_support,
    improved_eta,
    improved_weights,
    pseudo_spectrum,
    sample_observation,
)
from rmtmusic.rmt import ContourSpec


def _setup(seed=11, sigma2=1.0):
    sc = build_scenario(20, 40, (-0.5, 0.9), (5.0, 8.0), sigma2=sigma2, seed=0)
    inp = DeterministicInput.from_scenario(sc)
    prof = find_support(inp)
    rep = check_separation(prof, inp, sc.K)
    ct = choose_contour(prof, rep)
    spec = decompose(sample_observation(sc, seed), sigma2)
    return sc, inp, ct, spec


def test_noiseless_weights_are_indicator():
    sc = build_scenario(20, 40, (-0.5, 0.9), (5.0, 8.0), sigma2=0.0, seed=0)
    spec = decompose(sample_observation(sc, 0), 0.0)
    ct = ContourSpec(t1_minus=0.01, t1_plus=1.0, t2_minus=2.0, t2_plus=10.0,
                     epsilon=0.005, y=0.1)
    w = improved_weights(spec, ct)
    expect = np.concatenate([np.ones(18), np.zeros(2)])
    assert np.array_equal(w.rho, expect)


def test_residue_and_quadrature_methods_agree():
    _, _, ct, spec = _setup()
    wr = improved_weights(spec, ct, "residue")
    wq = improved_weights(spec, ct, "quadrature")
    assert np.max(np.abs(wr.rho - wq.rho)) < 1e-9
    assert wr.imag_residual < 1e-9


def test_weights_near_projector():
    _, _, ct, spec = _setup()
    w = improved_weights(spec, ct)
    # weights approximate the noise-block indicator at these sizes
    assert np.all(np.abs(w.rho[:18] - 1.0) < 0.5)
    assert np.all(np.abs(w.rho[18:]) < 0.5)


def test_pole_too_close_raises():
    _, _, ct, spec = _setup()
    tight = ContourSpec(t1_minus=ct.t1_minus, t1_plus=float(spec.lambdas[-3]),
                        t2_minus=ct.t2_minus, t2_plus=ct.t2_plus,
                        epsilon=ct.epsilon, y=ct.y)
    with pytest.raises(PoleTooClose):
        improved_weights(spec, tight)


def test_deterministic_weights_indicator():
    _, inp, ct, _ = _setup()
    w = deterministic_weights(inp, ct)
    expect = np.concatenate([np.ones(18), np.zeros(2)])
    assert np.max(np.abs(w - expect)) < 1e-8


def test_improved_eta_matches_pseudo_spectrum():
    _, _, ct, spec = _setup()
    w = improved_weights(spec, ct)
    grid = default_grid(40, 64)
    ps = pseudo_spectrum(spec, w, 2, grid)
    direct = improved_eta(w, spec, grid)
    assert np.allclose(ps.values_improved, direct, atol=1e-13)
    cls = classical_eta(spec, 2, grid)
    assert np.allclose(ps.values_classical, cls, atol=1e-13)


def test_classical_eta_range():
    _, _, _, spec = _setup()
    vals = classical_eta(spec, 2, np.linspace(-np.pi, np.pi, 50))
    assert np.all(vals >= -1e-12)
    assert np.all(vals <= 1.0 + 1e-12)


def test_default_grid_shape():
    g = default_grid(10)
    assert len(g) == 100
    assert g[0] == -np.pi
    assert np.all(np.diff(g) > 0)


def test_extract_doas_intervals_quadratic():
    f = lambda t: (t - 0.3) ** 2 - 0.1
    out = extract_doas_intervals(f, [(0.0, 1.0)])
    assert abs(out.estimates[0] - 0.3) < 1e-8


def test_extract_doas_intervals_empty():
    with pytest.raises(EmptyInterval):
        extract_doas_intervals(lambda t: t, [(1.0, 1.0)])


def test_extract_doas_topk_picks_deepest():
    grid = np.linspace(-np.pi, np.pi, 2001)
    vals = np.cos(5 * grid) * np.array([1.0 if abs(g) < 1.5 else 0.3 for g in grid])
    from rmtmusic import PseudoSpectrum
    ps = PseudoSpectrum(grid=grid, values_classical=vals, values_improved=vals)
    out = extract_doas_topk(ps, 2, min_spacing=0.5)
    # deepest minima of the tapered cosine are the two inner troughs
    assert np.all(np.abs(np.cos(5 * out.estimates) + 1.0) < 1e-3)
    assert np.all(np.abs(out.estimates) < 1.5)


def test_extract_doas_topk_too_few():
    grid = np.linspace(0.0, 1.0, 101)
    vals = (grid - 0.5) ** 2  # single minimum
    from rmtmusic import PseudoSpectrum
    ps = PseudoSpectrum(grid=grid, values_classical=vals, values_improved=vals)
    with pytest.raises(TooFewMinima):
        extract_doas_topk(ps, 3)
