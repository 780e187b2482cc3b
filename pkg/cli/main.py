#!/usr/bin/env python3
"""Command-line interface for expanderlab.

Every command runs inside an error boundary, writes its numeric series as
CSV into --out and finishes with a manifest.json recording the parameters,
derived constants, artifacts and wall time.
"""

import argparse
import logging
import math
import sys
import time
from dataclasses import asdict
from pathlib import Path
from typing import Callable, Dict, List, Optional

import numpy as np

from cli.config import Config, load_config
from cli.errors import ErrorBoundary, ErrorBoundaryExit, ErrorType
from expanderlab import calibration
from expanderlab.asymptotics import basis_at_infinity, fit_decay, profile_potential
from expanderlab.export import (
    diagnostics_columns,
    ensure_dir,
    gl_tables,
    profile_columns,
    run_tables,
    scan_columns,
    write_csv,
    write_json,
    write_manifest,
    write_snapshots,
)
from expanderlab.gl_regularization import gl_select
from expanderlab.models import (
    GLConfig,
    Pole,
    ProfileParams,
    Run,
    RunManifest,
    SimConfig,
    VerificationFailure,
)
from expanderlab.pde_simulator import (
    branch_profile,
    decay_rate,
    evolve,
    evolve_selfsimilar,
    make_branch_data,
    nonuniqueness_pair,
    tracking_study,
    weighted_growth,
)
from expanderlab.profile_solver import (
    cached_profile,
    critical_params,
    scan_branches,
    solve_profile,
)
from expanderlab.verification import (
    barrier_radii,
    barrier_times,
    bump_test_pair,
    comparison_suite,
    energy_inequality_check,
    find_supersolution_params,
    holder_monitor,
    regularity_monitors,
    supersolution_residual,
)

logger = logging.getLogger("expanderlab")

EXIT_SUCCESS = 0
ENERGY_MARGIN = -1e-3
COMPARISON_TOLERANCE = 1e-6
BARRIER_TOLERANCE = 1e-8
CRITICAL_TOL = 1e-8
MIN_SEPARATION = 2.0
EXPECTED_DECAY_RATE = 0.5
DECAY_RATE_TOLERANCE = 0.1

Command = Callable[[Config, Path, RunManifest], None]


def _floats(text: str) -> List[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers: {e}")


def _parameter_parent() -> argparse.ArgumentParser:
    """Options shared by every command."""
    parent = argparse.ArgumentParser(add_help=False)

    general = parent.add_argument_group("General options")
    general.add_argument("--config", help="JSON file with configuration defaults.")
    general.add_argument(
        "--out", default="expanderlab-out", help="Output directory for artifacts."
    )
    general.add_argument("--debug", action="store_true", help="Enable debug output.")
    general.add_argument(
        "--error-format",
        choices=["text", "json"],
        default="text",
        help="Format for error messages",
    )
    general.add_argument("--threads", type=int, help="Worker cap for parallel runs.")

    model = parent.add_argument_group("Model parameters")
    model.add_argument("--d", type=int, help="Dimension (>= 3).")
    model.add_argument("--alpha", type=float, help="Shooting slope psi'(0).")
    model.add_argument("--ell", type=float, help="Target limit psi(infinity).")
    model.add_argument("--pole", choices=["north", "south"])
    model.add_argument("--branch", choices=["north", "south"])
    model.add_argument("--tol", type=float, help="Integrator tolerance.")
    model.add_argument("--rho-max", type=float, help="Outer shooting radius.")
    model.add_argument(
        "--alpha-range", type=_floats, help="Scan range as LO,HI (scan command)."
    )
    model.add_argument("--n", type=int, dest="scan_points", help="Scan points.")

    pde = parent.add_argument_group("Evolution parameters")
    pde.add_argument(
        "--grid", help='Radial grid, "uniform:R:N" or "graded:R[:r1:ratio:dr_max]".'
    )
    pde.add_argument("--dt", type=float, help="Time step, or c in dt = c t.")
    pde.add_argument("--t-span", type=_floats, help="Time span as T0,T1.")
    pde.add_argument("--s-span", type=_floats, help="Self-similar span as S0,S1.")
    pde.add_argument(
        "--epsilon-seq", type=_floats, help="Decreasing GL epsilons, comma-separated."
    )
    return parent


def build_parser() -> argparse.ArgumentParser:
    parent = _parameter_parent()
    parser = argparse.ArgumentParser(
        description="Expanders of the corotational harmonic map heat flow.",
        prog="expanderlab",
    )
    parser.add_argument(
        "--version",
        "-v",
        action="version",
        version=f"%(prog)s {__import__('cli').__version__}",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    commands.add_parser("profile", parents=[parent], help="Solve one profile.")
    commands.add_parser("scan", parents=[parent], help="Bifurcation diagram.")
    commands.add_parser("critical", parents=[parent], help="alpha0, alpha*, ell*.")

    pde = commands.add_parser("pde", help="Evolve the radial heat flow.")
    pde_kinds = pde.add_subparsers(dest="kind", required=True)
    for kind, text in (
        ("expander", "Track an exact expander at two resolutions."),
        ("pair", "North and South runs from the same data."),
        ("selfsim", "Decay of a perturbed expander in self-similar time."),
    ):
        pde_kinds.add_parser(kind, parents=[parent], help=text)

    commands.add_parser("gl", parents=[parent], help="Ginzburg-Landau selection.")

    verify = commands.add_parser("verify", help="Run a verification suite.")
    suites = verify.add_subparsers(dest="kind", required=True)
    for suite in ("comparison", "energy", "supersolution", "asymptotics", "regularity"):
        suites.add_parser(suite, parents=[parent])

    calibrate = commands.add_parser(
        "calibrate", parents=[parent], help="Recompute constants.json."
    )
    calibrate.add_argument(
        "--constants", help="Target file (the checked-in constants.json by default)."
    )
    return parser


def parse_args(argv: Optional[List[str]] = None) -> argparse.Namespace:
    return build_parser().parse_args(argv)


def config_from_args(args: argparse.Namespace) -> Config:
    flags = {
        key: getattr(args, key, None)
        for key in (
            "d",
            "alpha",
            "ell",
            "pole",
            "branch",
            "tol",
            "rho_max",
            "alpha_range",
            "scan_points",
            "grid",
            "dt",
            "t_span",
            "s_span",
            "threads",
        )
    }
    flags["epsilon_seq"] = getattr(args, "epsilon_seq", None)
    flags["constants"] = getattr(args, "constants", None)
    return load_config(args.config).with_overrides(**flags).validate()


def _constant_data(ell: float) -> Callable[[np.ndarray], np.ndarray]:
    return lambda r: np.full_like(np.asarray(r, dtype=float), ell)


def _record(manifest: RunManifest, path: Path) -> Path:
    manifest.artifacts.append(str(path))
    return path


def cmd_profile(config: Config, out: Path, manifest: RunManifest) -> None:
    params = ProfileParams(
        d=config.d,
        alpha=config.alpha,
        pole=Pole(config.pole),
        rho_max=config.rho_max,
        tol=config.tol,
        rho0=config.rho0,
        order=config.order,
    )
    profile = solve_profile(params)
    _record(manifest, write_csv(out / "profile.csv", profile_columns(profile)))
    manifest.add_constant("psi_inf", profile.psi_inf, profile.psi_inf_error)
    print(f"psi(inf) = {profile.psi_inf:.12f} +/- {profile.psi_inf_error:.1e}")
    print(f"equator crossings: {profile.crossings_of_equator}")


def cmd_scan(config: Config, out: Path, manifest: RunManifest) -> None:
    scan = scan_branches(
        config.d,
        tuple(config.alpha_range),
        config.scan_points,
        config.rho_max,
        config.tol,
    )
    _record(manifest, write_csv(out / "scan.csv", scan_columns(scan)))
    print(f"max limit: {float(np.max(scan.limits)):.12f}")
    print(f"sign changes of limit - pi/2: {scan.equator_sign_changes()}")


def cmd_critical(config: Config, out: Path, manifest: RunManifest) -> None:
    crit = critical_params(config.d, tol=CRITICAL_TOL, rho_max=config.rho_max)
    for name in ("alpha0", "alpha_star", "ell_star", "delta_star"):
        value = getattr(crit, name)
        manifest.add_constant(name, value, crit.tol)
        print(f"{name} = {value:.12g}")
    _record(manifest, write_json(out / "critical.json", asdict(crit)))


def _write_run(manifest: RunManifest, out: Path, run: Run, name: str) -> None:
    for path in write_snapshots(
        out / name, run_tables(run), label=run.label, grid=run.grid, config=run.config
    ):
        _record(manifest, path)
    _record(
        manifest, write_csv(out / f"{name}_diagnostics.csv", diagnostics_columns(run))
    )


def _sim_config(config: Config, **overrides) -> SimConfig:
    settings = dict(
        d=config.d,
        dt=config.dt,
        dt_mode=config.dt_mode,
        theta=config.theta,
        t_span=tuple(config.t_span),
        delta_start=config.delta,
    )
    settings.update(overrides)
    return SimConfig(**settings)


def cmd_pde_expander(config: Config, out: Path, manifest: RunManifest) -> None:
    profile = branch_profile(config.d, config.ell, Pole.NORTH)
    study = tracking_study(profile, config.radial_grid(), _sim_config(config))
    _record(manifest, write_json(out / "tracking.json", study))
    for key, value in study.items():
        print(f"{key}: {value:.6e}")


def cmd_pde_pair(config: Config, out: Path, manifest: RunManifest) -> None:
    t_end = max(config.t_span[1], 10 * config.delta)
    sim = _sim_config(config, t_span=(config.delta, t_end), snapshot_every=1)
    north, south = nonuniqueness_pair(
        config.d,
        config.ell,
        _constant_data(config.ell),
        sim,
        config.radial_grid(),
        eps=config.zeta_eps,
    )
    failures = []
    for run, name in ((north, "north"), (south, "south")):
        _write_run(manifest, out, run, name)
        manifest.add_constant(f"zeta_{name}", run.summary["zeta"], config.zeta_eps)
        margin = _energy_margin(run)
        manifest.add_constant(f"energy_margin_{name}", margin, 0.0)
        print(f"{name}: zeta({config.zeta_eps}) = {run.summary['zeta']:.4g}")
        print(f"{name}: energy margin = {margin:.3e}")
        if margin < ENERGY_MARGIN:
            failures.append(f"{name} energy margin {margin:.3e}")
        if not run.summary["zeta"] > 0:
            failures.append(f"{name} zeta {run.summary['zeta']:.3g}")
    separation = north.summary["separation"]
    print(f"final separation: {separation:.6f}")
    if not separation > MIN_SEPARATION:
        failures.append(f"separation {separation:.4f} <= {MIN_SEPARATION}")
    if failures:
        raise VerificationFailure(f"pair checks failed: {'; '.join(failures)}")


def cmd_pde_selfsim(config: Config, out: Path, manifest: RunManifest) -> None:
    profile = cached_profile(config.d, config.alpha, config.rho_max)

    def initial(rho):
        psi, _ = profile.evaluate(rho)
        return psi + 0.1 * rho**2 * np.exp(-(rho**2) / 8)

    run = evolve_selfsimilar(initial, tuple(config.s_span), profile, ds=config.ds)
    rate, rms = decay_rate(run)
    _write_run(manifest, out, run, "selfsim")
    manifest.add_constant("decay_rate", rate, rms)
    manifest.add_constant("weighted_growth", weighted_growth(run), 0.0)
    print(f"decay rate: {rate:.4f} (rms {rms:.2e}); expected {EXPECTED_DECAY_RATE}")
    if abs(rate - EXPECTED_DECAY_RATE) > DECAY_RATE_TOLERANCE:
        raise VerificationFailure(
            f"decay rate {rate:.4f} outside {EXPECTED_DECAY_RATE} "
            f"+/- {DECAY_RATE_TOLERANCE}"
        )


def cmd_gl(config: Config, out: Path, manifest: RunManifest) -> None:
    gl_config = GLConfig(
        d=config.d,
        epsilon_sequence=tuple(config.epsilon_seq),
        grid=config.radial_grid(),
        dt=config.gl_dt,
        t_span=(0.0, config.gl_t_end),
    )
    report = gl_select(_constant_data(config.ell), gl_config, refine_reference=True)
    for run in report["runs"]:
        tables = gl_tables(run["snapshots"])
        directory = out / f"gl_eps{run['epsilon']:g}"
        grid = run["snapshots"][0].grid
        for path in write_snapshots(
            directory, tables, epsilon=run["epsilon"], grid=grid
        ):
            _record(manifest, path)
    rows = report["rows"]
    summary = {key: value for key, value in report.items() if key != "runs"}
    _record(manifest, write_json(out / "gl_report.json", summary))
    for row in rows:
        manifest.add_constant(f"distance_eps{row['epsilon']:g}", row["distance"], 0.0)
        print(
            f"eps={row['epsilon']:g}: distance {row['distance']:.4e}, "
            f"min v {row['min_v']:.4f}, branch {row['branch']}"
        )
    print(f"monotone in eps: {report['monotone']}")
    if not report["monotone"]:
        raise VerificationFailure("distance to the reference is not monotone in eps")
    worst = max(row["max_modulus_sq"] for row in rows)
    if worst > (1 + 1e-8) ** 2:
        raise VerificationFailure(f"|u|^2 reached {worst:.12f} > (1 + 1e-8)^2")
    manifest.add_constant("reference_error", report["reference_error"], 0.0)
    if not report["within_reference_error"]:
        raise VerificationFailure(
            f"final distance {rows[-1]['distance']:.3e} exceeds twice the "
            f"reference error {report['reference_error']:.3e}"
        )


def _expander_run(config: Config) -> Run:
    """North run from constant data ell over a decade after delta."""
    grid = config.radial_grid()
    data = make_branch_data(
        config.d, config.ell, Pole.NORTH, _constant_data(config.ell), config.delta, grid
    )
    sim = _sim_config(
        config, t_span=(config.delta, 10 * config.delta), snapshot_every=1
    )
    return evolve(data, sim, label="north", profile=None)


def _energy_margin(run: Run) -> float:
    """Smallest normalized margin over two bump test pairs inside the run."""
    t0, t1 = float(run.times[0]), float(run.times[-1])
    span = t1 - t0
    r1 = float(run.grid.nodes[1])
    reach = min(0.5 * run.grid.r_dom, 10 * math.sqrt(t1))
    support = (t0 + 0.1 * span, t1 - 0.1 * span, 5 * r1, reach)
    margins = [
        energy_inequality_check(run, bump_test_pair(support, 1.0, g))[
            "normalized_margin"
        ]
        for g in (0.0, 1.0)
    ]
    return min(margins)


def cmd_verify_comparison(config: Config, out: Path, manifest: RunManifest) -> None:
    violations = comparison_suite(config.radial_grid(), config.d)
    for label, value in zip(("coarse", "fine"), violations):
        manifest.add_constant(f"violation_{label}", value, COMPARISON_TOLERANCE)
        print(f"{label}: max violation {value:.3e}")
    if max(violations) > COMPARISON_TOLERANCE:
        raise VerificationFailure(f"ordering violated by {max(violations):.3e}")


def cmd_verify_energy(config: Config, out: Path, manifest: RunManifest) -> None:
    run = _expander_run(config)
    margin = _energy_margin(run)
    manifest.add_constant("energy_margin", margin, abs(ENERGY_MARGIN))
    print(f"normalized energy margin: {margin:.3e}")
    if margin < ENERGY_MARGIN:
        raise VerificationFailure(f"energy inequality margin {margin:.3e}")


def cmd_verify_supersolution(
    config: Config, out: Path, manifest: RunManifest
) -> None:
    profile = cached_profile(config.d, config.alpha, config.rho_max)
    params = find_supersolution_params(profile)
    times, radii = barrier_times(params.s0), barrier_radii(params)
    upper = supersolution_residual(params, profile, times, radii)
    lower = supersolution_residual(params, profile, times, radii, sub=True)
    worst_upper = min(float(np.min(r)) for r in upper)
    worst_lower = max(float(np.max(r)) for r in lower)
    for name in ("eta", "A", "s0"):
        manifest.add_constant(name, getattr(params, name), BARRIER_TOLERANCE)
    _record(
        manifest,
        write_json(
            out / "barrier.json",
            {
                "eta": params.eta,
                "M": params.M,
                "A": params.A,
                "R": params.R,
                "s0": params.s0,
                "min_residual_upper": worst_upper,
                "max_residual_lower": worst_lower,
            },
        ),
    )
    print(f"eta={params.eta:.4e} A={params.A:.4e} s0={params.s0:.4f}")
    print(f"residuals: u+ >= {worst_upper:.3e}, u- <= {worst_lower:.3e}")


def cmd_verify_asymptotics(config: Config, out: Path, manifest: RunManifest) -> None:
    profile = cached_profile(config.d, config.alpha, config.rho_max)
    rho_max = config.rho_max
    rho = profile.nodes
    # decay fits need a radius span of at least a factor 3
    tail = rho >= rho_max / 4
    tail_fit = fit_decay(rho[tail], np.abs(profile.psi[tail] - profile.psi_inf))
    phi1, phi2 = basis_at_infinity(
        profile_potential(profile), config.d, R=rho_max / 3, rho_max=rho_max
    )
    phi2_fit = fit_decay(phi2.nodes, np.abs(phi2.values - 1.0))
    # phi1 against its leading term rho^-d exp(-rho^2/4)
    window = np.linspace(0.5 * rho_max, 0.85 * rho_max, 40)
    log_gap = (
        np.log(phi1.evaluate(window)) + config.d * np.log(window) + window**2 / 4
    )
    checks = {
        "tail_exponent": (tail_fit.exponent, -2.0, 0.2),
        "phi2_exponent": (phi2_fit.exponent, -2.0, 0.2),
        "phi1_log_gap": (float(np.max(np.abs(log_gap))), 0.0, 0.1),
    }
    failed = []
    for name, (value, expected, tolerance) in checks.items():
        manifest.add_constant(name, value, tolerance)
        print(f"{name}: {value:.4f} (expected {expected} +/- {tolerance})")
        if abs(value - expected) > tolerance:
            failed.append(name)
    if failed:
        raise VerificationFailure(f"asymptotic rates off: {', '.join(failed)}")


def cmd_verify_regularity(config: Config, out: Path, manifest: RunManifest) -> None:
    run = _expander_run(config)
    monitors = regularity_monitors(run)
    holder = holder_monitor(run, r_window=0.1)
    write_csv(
        out / "regularity.csv",
        {"t": monitors["times"], **monitors["series"]},
    )
    _record(manifest, out / "regularity.csv")
    _record(manifest, write_csv(out / "holder.csv", holder))
    for name, value in monitors["sup"].items():
        manifest.add_constant(f"sup_{name}", value, 0.0)
        print(f"{name}: sup {value:.4e}, trend {monitors['trend'][name]:+.3f}")
    growing = [name for name, flag in monitors["growing"].items() if flag]
    if growing:
        raise VerificationFailure(f"growing gradient monitors: {', '.join(growing)}")


def cmd_calibrate(config: Config, out: Path, manifest: RunManifest) -> None:
    target = Path(config.constants) if config.constants else None
    values = calibration.calibrate(target)
    for name, entry in values.items():
        manifest.add_constant(name, entry["value"], entry["tol"])
        print(f"{name} = {entry['value']:.12g}")
    _record(manifest, target or calibration.CONSTANTS_PATH)


COMMANDS: Dict[str, Command] = {
    "profile": cmd_profile,
    "scan": cmd_scan,
    "critical": cmd_critical,
    "pde expander": cmd_pde_expander,
    "pde pair": cmd_pde_pair,
    "pde selfsim": cmd_pde_selfsim,
    "gl": cmd_gl,
    "verify comparison": cmd_verify_comparison,
    "verify energy": cmd_verify_energy,
    "verify supersolution": cmd_verify_supersolution,
    "verify asymptotics": cmd_verify_asymptotics,
    "verify regularity": cmd_verify_regularity,
    "calibrate": cmd_calibrate,
}


def command_name(args: argparse.Namespace) -> str:
    kind = getattr(args, "kind", None)
    return f"{args.command} {kind}" if kind else args.command


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point for the CLI.

    Returns:
        Exit code: 0 success, 1 usage error, 2 numerical failure,
        3 verification failure
    """
    try:
        args = parse_args(argv)
    except SystemExit as e:
        # argparse exits 0 for --help and --version, 2 for bad usage
        return EXIT_SUCCESS if not e.code else ErrorType.USAGE.value

    logging.basicConfig(
        level=logging.DEBUG if args.debug else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    name = command_name(args)
    error_opts = {"verbose": args.debug, "error_format": args.error_format}
    manifest = RunManifest(command=name)
    started = time.perf_counter()
    try:
        with ErrorBoundary("configure", ErrorType.USAGE, **error_opts) as eb:
            eb.add_context("config", args.config)
            config = config_from_args(args)
            config.apply_threads()
            out = ensure_dir(args.out)
        manifest.parameters = config.to_dict()

        with ErrorBoundary(name, ErrorType.NUMERICAL, **error_opts) as eb:
            eb.add_context("out", str(out))
            eb.add_context("d", config.d)
            try:
                COMMANDS[name](config, out, manifest)
            finally:
                manifest.wall_time = time.perf_counter() - started
                write_manifest(out, manifest)
    except ErrorBoundaryExit as e:
        return e.error_type.value
    except KeyboardInterrupt:
        print("\nOperation interrupted by user", file=sys.stderr)
        return ErrorType.NUMERICAL.value
    return EXIT_SUCCESS


if __name__ == "__main__":
    sys.exit(main())
