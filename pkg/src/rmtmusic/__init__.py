"""Subspace direction-of-arrival estimation with random-matrix bias correction.

The package implements the information-plus-noise spectral machinery (canonical
equation, support characterization, secular roots), the contour-integral
bias-corrected pseudo-spectrum, and a deterministic Monte Carlo harness.
"""
from .errors import (
    DegenerateSteering,
    EmptyInterval,
    NoConvergence,
    NumericalFailure,
    PoleHit,
    PoleTooClose,
    QuadratureNoConvergence,
    RmtMusicError,
    SeparationViolated,
    SupportSearchFailed,
    TooFewMinima,
)
from .model import (
    GroundTruth,
    Observation,
    Scenario,
    build_scenario,
    exp_sum_q,
    sample_observation,
    steering,
    steering_grid,
    true_eta,
    true_projector,
)
from .spectrum import (
    SpectralDecomposition,
    b_hat,
    decompose,
    empirical_stieltjes,
    g_hat,
    secular_roots,
    w_hat,
)
from .rmt import (
    ContourSpec,
    DeterministicInput,
    SeparationReport,
    SupportProfile,
    check_separation,
    choose_contour,
    find_support,
    limit_to_real,
    phi,
    phi_prime,
    solve_canonical,
    solve_canonical_with_derivative,
    w_of_z,
    w_prime,
)
from .estimator import (
    DoAEstimates,
    PseudoSpectrum,
    WeightVector,
    classical_eta,
    default_grid,
    deterministic_weights,
    extract_doas_intervals,
    extract_doas_topk,
    improved_eta,
    improved_weights,
    pseudo_spectrum,
)
from .experiments import (
    ExperimentConfig,
    ExperimentReport,
    ReportRow,
    emit_report,
    run_doa_consistency,
    run_escape_diagnostics,
    run_uniform_consistency,
)

__version__ = "1.0.0"
