"""Command-line front end.

Subcommands: ``support`` (support analysis of a deterministic eigenvalue
profile), ``estimate`` (DoA estimation on a provided observation matrix),
``simulate`` (draw and save an observation), and ``mc-consistency`` /
``mc-doa`` / ``mc-escape`` (Monte Carlo experiment runners driven by a JSON
config).

Exit codes: 0 success, 2 input/parse error, 3 support search failure,
4 separation violation; the remaining package errors map 1:1 to codes 5+ and
every failure message names the stage that raised it.
"""
from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import estimator as est
from . import experiments as exp
from . import model, rmt, spectrum
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

DEFAULT_SEED = 20240901  # fixed documented default; never wall-clock

_EXIT_CODES = {
    SupportSearchFailed: 3,
    SeparationViolated: 4,
    PoleTooClose: 5,
    QuadratureNoConvergence: 6,
    NoConvergence: 7,
    TooFewMinima: 8,
    EmptyInterval: 9,
    PoleHit: 10,
    NumericalFailure: 11,
    DegenerateSteering: 12,
}


class CliError(Exception):
    """Input/validation problem; maps to exit code 2."""


# ---------------------------------------------------------------------------
# file formats
# ---------------------------------------------------------------------------

def write_complex_matrix(path: str, matrix: np.ndarray) -> None:
    """Text format: header ``# complex M N``; one row per line, entries
    comma-separated as ``<re>(+|-)<im>i`` with 17 significant digits."""
    matrix = np.asarray(matrix, dtype=complex)
    M, N = matrix.shape
    with open(path, "w") as fh:
        fh.write(f"# complex {M} {N}\n")
        for row in matrix:
            fh.write(",".join(
                f"{x.real:.17g}{'+' if x.imag >= 0 else '-'}{abs(x.imag):.17g}i"
                for x in row
            ) + "\n")


def read_complex_matrix(path: str) -> np.ndarray:
    try:
        with open(path) as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc}") from exc
    if not lines or not lines[0].startswith("# complex"):
        raise CliError(f"{path}:1: expected header '# complex M N'")
    try:
        _, _, m_s, n_s = lines[0].split()
        M, N = int(m_s), int(n_s)
    except ValueError as exc:
        raise CliError(f"{path}:1: malformed header {lines[0]!r}") from exc
    rows = []
    for i, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            rows.append([complex(tok.strip().replace("i", "j"))
                         for tok in line.split(",")])
        except ValueError as exc:
            raise CliError(f"{path}:{i}: cannot parse complex entry") from exc
        if len(rows[-1]) != N:
            raise CliError(f"{path}:{i}: expected {N} entries, got {len(rows[-1])}")
    if len(rows) != M:
        raise CliError(f"{path}: expected {M} rows, got {len(rows)}")
    return np.array(rows, dtype=complex)


def read_eigenvalues(path: str) -> np.ndarray:
    """One real eigenvalue per line (or comma-separated); '#' lines ignored."""
    try:
        with open(path) as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc}") from exc
    vals = []
    for i, line in enumerate(lines, start=1):
        s = line.split("#", 1)[0].strip()
        if not s:
            continue
        for tok in s.split(","):
            try:
                vals.append(float(tok))
            except ValueError as exc:
                raise CliError(f"{path}:{i}: cannot parse number {tok!r}") from exc
    if not vals:
        raise CliError(f"{path}: no eigenvalues found")
    return np.array(vals)


def _write_text(path: str | None, text: str) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def _parse_angles(s: str) -> np.ndarray:
    try:
        return np.array([float(t) for t in s.split(",")])
    except ValueError as exc:
        raise CliError(f"cannot parse angle list {s!r}") from exc


def cmd_support(args) -> int:
    lambdas = np.sort(read_eigenvalues(args.eigs_file))
    if np.any(lambdas < 0):
        raise CliError("eigenvalues must be non-negative")
    K = int(np.sum(lambdas > 0))
    inp = rmt.DeterministicInput(
        true_lambdas=lambdas, sigma2=args.sigma2, c=args.c
    )
    profile = rmt.find_support(inp)
    report = rmt.check_separation(profile, inp, K)
    doc = {
        "Q": profile.Q,
        "clusters": [
            {"w_minus": float(profile.w_minus[q]), "w_plus": float(profile.w_plus[q]),
             "x_minus": float(profile.x_minus[q]), "x_plus": float(profile.x_plus[q])}
            for q in range(profile.Q)
        ],
        "association": [int(a) for a in profile.association],
        "a5": bool(report.a5),
        "a6": bool(report.a6),
        "separated": bool(report.separated),
        "contour": None,
    }
    code = 0
    if report.separated:
        ct = rmt.choose_contour(profile, report)
        doc["contour"] = {
            "t1_minus": ct.t1_minus, "t1_plus": ct.t1_plus,
            "t2_minus": ct.t2_minus, "t2_plus": ct.t2_plus,
            "epsilon": ct.epsilon, "y": ct.y,
        }
    else:
        code = 4
    _write_text(args.out, json.dumps(doc, indent=2) + "\n")
    if code:
        print("separation check failed (stage: check_separation)", file=sys.stderr)
    return code


def _plugin_contour(spec, K: int, tol: float) -> rmt.ContourSpec:
    """Build a contour from data alone: approximate the top-K signal
    eigenvalues of ``B B*`` by the first-order plug-in ``w_hat(lambda_hat_k)``
    with the k-th pole left out of the Stieltjes sum (documented heuristic),
    then run the deterministic support analysis."""
    M = spec.M
    lam_est = np.zeros(M)
    for j in range(M - K, M):
        x = spec.lambdas[j]
        others = np.delete(spec.lambdas, j)
        m_loo = np.sum(1.0 / (others - x)) / M
        b = 1.0 + spec.rho * m_loo
        w = x * b * b - spec.sigma2 * (1.0 - spec.c) * b
        lam_est[j] = max(float(w), 0.0)
    inp = rmt.DeterministicInput(
        true_lambdas=np.sort(lam_est), sigma2=spec.sigma2, c=spec.c
    )
    profile = rmt.find_support(inp)
    report = rmt.check_separation(profile, inp, K)
    if not report.separated:
        raise SeparationViolated(
            "plug-in support analysis not separated (stage: check_separation)"
        )
    return rmt.choose_contour(profile, report)


def cmd_estimate(args) -> int:
    sigma = read_complex_matrix(args.input)
    M, N = sigma.shape
    if not M < N:
        raise CliError(f"need M < N, got {M} x {N}")
    K = args.K
    if not 0 < K < M:
        raise CliError("need 0 < K < M")
    obs = model.Observation(
        sigma_matrix=sigma,
        seed=args.seed if args.seed is not None else DEFAULT_SEED,
    )
    if args.estimate_sigma2:
        s = np.linalg.svd(sigma, compute_uv=False)
        sigma2 = float(np.mean(np.sort(s**2)[: M - K]))
    elif args.sigma2 is not None:
        sigma2 = args.sigma2
    else:
        raise CliError("provide --sigma2 or --estimate-sigma2")
    spec = spectrum.decompose(obs, sigma2)

    if sigma2 == 0:
        lo = spec.lambdas[M - K - 1]
        hi = spec.lambdas[M - K]
        if not hi > lo:
            raise SeparationViolated("no spectral gap at sigma2=0 (stage: contour)")
        # rectangle straddling the zero block (x_lo < 0) for the indicator weights
        eps = (hi - lo) / 100.0
        contour = rmt.ContourSpec(
            t1_minus=eps, t1_plus=lo + 0.5 * (hi - lo),
            t2_minus=hi, t2_plus=hi + 1.0, epsilon=eps, y=3.5 * eps,
        )
    elif args.contour is not None:
        try:
            t1m, t1p, t2m, t2p = (float(t) for t in args.contour.split(","))
        except ValueError as exc:
            raise CliError(f"--contour expects t1m,t1p,t2m,t2p, got {args.contour!r}") from exc
        g = t2m - t1p
        eps = min(t1m, 0.25 * g) / 4.0
        contour = rmt.ContourSpec(
            t1_minus=t1m, t1_plus=t1p, t2_minus=t2m, t2_plus=t2p,
            epsilon=eps, y=max(3.5 * eps, (t1p - t1m) / 2.0),
        )
    else:
        contour = _plugin_contour(spec, K, args.tol)

    weights = est.improved_weights(spec, contour, args.method)
    grid = est.default_grid(N, args.grid)
    pspec = est.pseudo_spectrum(spec, weights, K, grid)
    evaluator = lambda th: est.improved_eta(weights, spec, th)
    if args.intervals is not None:
        try:
            vals = [float(t) for t in args.intervals.split(",")]
            if len(vals) % 2:
                raise ValueError
        except ValueError as exc:
            raise CliError(f"--intervals expects lo1,hi1,lo2,hi2,...") from exc
        intervals = np.array(vals).reshape(-1, 2)
        doas = est.extract_doas_intervals(evaluator, intervals, tol=args.tol)
    else:
        doas = est.extract_doas_topk(
            pspec, K, evaluator, min_spacing=2.0 * np.pi / M, tol=args.tol
        )

    doc = {
        "K": K,
        "sigma2": sigma2,
        "contour": {"t1_minus": contour.t1_minus, "t1_plus": contour.t1_plus,
                    "t2_minus": contour.t2_minus, "t2_plus": contour.t2_plus,
                    "epsilon": contour.epsilon, "y": contour.y},
        "weights_imag_residual": weights.imag_residual,
        "estimates": doas.estimates.tolist(),
        "residuals": doas.residuals.tolist(),
    }
    _write_text(args.out, json.dumps(doc, indent=2) + "\n")
    if args.pspec_out:
        lines = ["theta,classical,improved"]
        for t, c_v, i_v in zip(pspec.grid, pspec.values_classical, pspec.values_improved):
            lines.append(f"{t:.17g},{c_v:.17g},{i_v:.17g}")
        _write_text(args.pspec_out, "\n".join(lines) + "\n")
    return 0


def cmd_simulate(args) -> int:
    angles = _parse_angles(args.angles)
    powers = None
    if args.powers is not None:
        powers = [float(t) for t in args.powers.split(",")]
    scenario = model.build_scenario(
        args.M, args.N, angles, powers, sigma2=args.sigma2,
        seed=args.scenario_seed,
    )
    seed = args.seed if args.seed is not None else DEFAULT_SEED
    obs = model.sample_observation(scenario, seed)
    if args.out is None:
        raise CliError("simulate requires --out")
    write_complex_matrix(args.out, obs.sigma_matrix)
    return 0


_CONFIG_FIELDS = {
    "angles": (list, True),
    "powers": (list, True),
    "c": (float, True),
    "N_list": (list, True),
    "trials": (int, True),
    "base_seed": (int, False),
    "sigma2": (float, False),
    "snr_factor": (float, False),
    "scenario_seed": (int, False),
    "grid_cap": (int, False),
    "method": (str, False),
    "threads": (int, False),
    "interval_halfwidth": (float, False),
    "contour_powers": (list, False),
}


def _load_experiment_config(args) -> exp.ExperimentConfig:
    try:
        with open(args.config) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise CliError(f"cannot read {args.config}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise CliError(f"{args.config}: invalid JSON at line {exc.lineno}") from exc
    if not isinstance(doc, dict):
        raise CliError("/: config must be a JSON object")
    kwargs = {}
    for key, value in doc.items():
        if key not in _CONFIG_FIELDS:
            raise CliError(f"/{key}: unknown config field")
        typ, _ = _CONFIG_FIELDS[key]
        if typ is float and isinstance(value, int):
            value = float(value)
        if value is not None and not isinstance(value, typ):
            raise CliError(f"/{key}: expected {typ.__name__}")
        kwargs[key] = tuple(value) if isinstance(value, list) else value
    for key, (_, required) in _CONFIG_FIELDS.items():
        if required and key not in kwargs:
            raise CliError(f"/{key}: required field missing")
    if args.seed is not None:
        kwargs["base_seed"] = args.seed
    if args.threads is not None:
        kwargs["threads"] = args.threads
    try:
        return exp.ExperimentConfig(**kwargs)
    except ValueError as exc:
        raise CliError(str(exc)) from exc


def _run_mc(args, runner) -> int:
    cfg = _load_experiment_config(args)
    report = runner(cfg)
    if args.out is None:
        rows = exp.report_to_rows(report)
        sys.stdout.write(json.dumps(rows, indent=2) + "\n")
    else:
        exp.emit_report(report, args.format, args.out)
    return 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=None,
                   help=f"base seed (default {DEFAULT_SEED}, never wall-clock)")
    p.add_argument("--out", default=None, help="output path (default stdout)")
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--tol", type=float, default=1e-10)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rmtmusic",
        description="Subspace DoA estimation with random-matrix bias correction.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("support", help="support analysis of an eigenvalue profile")
    p.add_argument("eigs_file")
    p.add_argument("--sigma2", type=float, required=True)
    p.add_argument("--c", type=float, required=True)
    _add_common(p)
    p.set_defaults(fn=cmd_support)

    p = sub.add_parser("estimate", help="DoA estimation on an observation matrix")
    p.add_argument("input")
    p.add_argument("--K", type=int, required=True)
    p.add_argument("--sigma2", type=float, default=None)
    p.add_argument("--estimate-sigma2", action="store_true")
    p.add_argument("--grid", type=int, default=None, help="grid size (default N^2)")
    p.add_argument("--intervals", default=None, help="lo1,hi1,lo2,hi2,...")
    p.add_argument("--topk", action="store_true",
                   help="pick the K deepest minima (default when no --intervals)")
    p.add_argument("--contour", default=None, help="t1m,t1p,t2m,t2p bypass")
    p.add_argument("--method", choices=["residue", "quadrature"], default="residue")
    p.add_argument("--pspec-out", default=None, help="pseudo-spectrum CSV path")
    _add_common(p)
    p.set_defaults(fn=cmd_estimate)

    p = sub.add_parser("simulate", help="draw one observation and save it")
    p.add_argument("--M", type=int, required=True)
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--angles", required=True, help="comma-separated radians")
    p.add_argument("--powers", default=None, help="comma-separated per-source powers")
    p.add_argument("--sigma2", type=float, default=1.0)
    p.add_argument("--scenario-seed", type=int, default=0)
    _add_common(p)
    p.set_defaults(fn=cmd_simulate)

    for name, runner in [
        ("mc-consistency", exp.run_uniform_consistency),
        ("mc-doa", exp.run_doa_consistency),
        ("mc-escape", exp.run_escape_diagnostics),
    ]:
        p = sub.add_parser(name, help=f"run the {name[3:]} experiment")
        p.add_argument("config", help="JSON config mirroring ExperimentConfig")
        _add_common(p)
        p.set_defaults(fn=_run_mc, runner=runner)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.fn is _run_mc:
            return _run_mc(args, args.runner)
        return args.fn(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except RmtMusicError as exc:
        code = _EXIT_CODES.get(type(exc), 1)
        print(f"error ({type(exc).__name__}): {exc}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
