"""Checks run against solved profiles and PDE runs.

Barriers for the self-similar perturbation equation, comparison between runs,
the local energy inequality, regularity and Hoelder monitors, the theta
functional of two sub-equator runs and the Hardy constant behind uniqueness
in high dimension.
"""

import logging
import math
from fractions import Fraction
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import trapezoid

from .models import (
    DomainViolation,
    OriginBC,
    Pole,
    Profile,
    RadialField,
    RadialGrid,
    RangeError,
    Run,
    SimConfig,
    SupersolutionParams,
    TestFunctionPair,
    UnresolvedRegion,
    VariationSolution,
    VerificationFailure,
)
from .pde_simulator import EQUATOR, run_resolutions
from .profile_solver import kappa_threshold, solve_w, weight_z
from .utils import loglog_fit, smooth_cutoff, sphere_area

logger = logging.getLogger("expanderlab")

BARRIER_TOLERANCE = 1e-8
GROWTH_SLOPE = 0.1

Barrier = Callable[[float, np.ndarray], np.ndarray]


def j_nonlinearity(u, psi, d: int) -> np.ndarray:
    """J(u) = (d-1)/2 [sin(2(psi+u)) - sin(2psi) - 2cos(2psi) u].

    Evaluated as (d-1)/2 [-2 sin(a) sin^2(x/2) + cos(a)(sin x - x)] with
    a = 2 psi, x = 2u, which keeps the O(u^2) size for small u.
    """
    u = np.asarray(u, dtype=float)
    a = 2.0 * np.asarray(psi, dtype=float)
    x = 2.0 * u
    small = np.abs(x) < 1e-3
    sin_gap = np.where(small, -(x**3) / 6.0 + x**5 / 120.0, np.sin(x) - x)
    even = -2.0 * np.sin(a) * np.sin(0.5 * x) ** 2
    return 0.5 * (d - 1) * (even + np.cos(a) * sin_gap)


def barrier_weight(profile: Profile, fraction: float = 0.5) -> VariationSolution:
    """The positive solution w at kappa = fraction * (lower positivity threshold)."""
    kappa_lo, _ = kappa_threshold(profile)
    return solve_w(profile, fraction * kappa_lo)


def _barrier_terms(
    params: SupersolutionParams,
    profile: Profile,
    w: VariationSolution,
    s: float,
    rho: np.ndarray,
) -> Tuple[np.ndarray, np.ndarray]:
    """(u+, (d_s + H_alpha) u+) at one s on the radii rho > 0."""
    d = profile.d
    psi, _ = profile.evaluate(rho)
    w_val = w.evaluate(rho)
    scale = math.exp(0.5 * s)
    phi, phi1, phi2 = params.cutoff(scale * rho)
    g_r, g_rr = phi1 * scale, phi2 * scale**2

    m = params.M + params.A / rho**2
    m1 = -2.0 * params.A / rho**3
    m2 = 6.0 * params.A / rho**4
    c = (d - 1) / rho + 0.5 * rho
    potential = (d - 1) * np.cos(2 * psi) / rho**2

    # H_alpha w = kappa w / Z
    first = params.eta * w.parameter * w_val / weight_z(rho)
    second = phi * (potential * m - m2 - c * m1)
    third = -m * g_rr - (d - 1) / rho * m * g_r - 2.0 * m1 * g_r
    u_plus = params.eta * w_val + m * phi
    return u_plus, first + second + third


def supersolution_residual(
    params: SupersolutionParams,
    profile: Profile,
    s_grid: Sequence[float],
    rho_grid,
    *,
    w: Optional[VariationSolution] = None,
    sub: bool = False,
) -> List[np.ndarray]:
    """Pointwise residual (u)_s + H_alpha u + J(u)/rho^2 of the barrier.

    u = u+ = eta w + (M + A/rho^2) phi(e^{s/2} rho), or u- = -u+ with
    sub=True. A supersolution has residual >= 0, a subsolution <= 0.

    Args:
        params: Barrier parameters.
        profile: North profile psi_alpha the perturbation is taken around.
        s_grid: Times, each below params.s0.
        rho_grid: Radii, or a callable s -> radii.
        w: Positive solution with kappa > 0 (barrier_weight(profile) if None).
        sub: Evaluate u- instead of u+.

    Returns:
        One residual array per s.
    """
    if any(s >= params.s0 for s in s_grid):
        raise RangeError(f"barrier times must lie below s0={params.s0}")
    w = w if w is not None else barrier_weight(profile)
    residuals = []
    for s in s_grid:
        rho = np.asarray(rho_grid(s) if callable(rho_grid) else rho_grid, float)
        if np.any(rho <= 0):
            raise RangeError("barrier radii must be positive")
        psi, _ = profile.evaluate(rho)
        u_plus, linear = _barrier_terms(params, profile, w, s, rho)
        if sub:
            residual = -linear + j_nonlinearity(-u_plus, psi, profile.d) / rho**2
        else:
            residual = linear + j_nonlinearity(u_plus, psi, profile.d) / rho**2
        residuals.append(residual)
    return residuals


def barrier_radii(params: SupersolutionParams) -> Callable[[float], np.ndarray]:
    """Sampling radii at time s: a fixed log grid plus the cutoff transition.

    The transition rho in (R e^{-s/2}, 2R e^{-s/2}) is sampled densely near
    its inner end, where the cutoff leaves zero.
    """
    R = params.R
    x = np.concatenate(
        [
            np.geomspace(1e-3 * R, R, 40),
            R * (1.0 + np.geomspace(1e-3, 1.0, 300)),
            np.linspace(R, 2 * R, 200),
            np.geomspace(2 * R, 50 * R, 40),
        ]
    )
    fixed = np.geomspace(1e-3, 1e4, 120)

    def radii(s: float) -> np.ndarray:
        return np.unique(np.concatenate([fixed, x * math.exp(-0.5 * s)]))

    return radii


def barrier_times(s0: float) -> List[float]:
    return [s0 - gap for gap in (1e-3, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0)]


def find_supersolution_params(
    profile: Profile,
    w: Optional[VariationSolution] = None,
    M: float = 1.0,
    R: float = 1.0,
    *,
    A_range: Tuple[float, float] = (10.0, 1e12),
    tol: float = BARRIER_TOLERANCE,
) -> SupersolutionParams:
    """Search barrier parameters (eta, A, s0) for given M and R.

    eta is half the smaller of the two smallness bounds
    kappa/C1 inf rho^2/(Z w) and kappa/(10 C1 w(inf)) inf_{rho>1} rho^2/Z,
    with C1 = 2(d-1). A then grows geometrically, with
    s0 = log(M R^2 / A) - log 4, until both u+ and u- pass the sampled
    residual check at tolerance tol.

    Raises:
        VerificationFailure: No A in A_range passes.
    """
    if profile.params.pole is not Pole.NORTH:
        raise RangeError("barriers are built around North profiles")
    w = w if w is not None else barrier_weight(profile)
    kappa = w.parameter
    if not kappa or kappa <= 0:
        raise RangeError("the barrier weight needs kappa > 0")
    c1 = 2.0 * (profile.d - 1)
    rho = np.geomspace(1e-3, 1e3, 400)
    z = weight_z(rho)
    eta1 = kappa / c1 * float(np.min(rho**2 / (z * w.evaluate(rho))))
    outer = rho > 1
    eta2 = kappa / (10 * c1 * w.limit) * float(np.min(rho[outer] ** 2 / z[outer]))
    eta = 0.5 * min(eta1, eta2)

    def cutoff(x):
        return smooth_cutoff(x, R)

    for A in np.geomspace(A_range[0], A_range[1], 45):
        s0 = math.log(M * R**2 / A) - math.log(4.0)
        params = SupersolutionParams(eta, M, float(A), R, s0, cutoff)
        times, radii = barrier_times(s0), barrier_radii(params)
        upper = supersolution_residual(params, profile, times, radii, w=w)
        worst_upper = min(float(np.min(r)) for r in upper)
        if worst_upper < -tol:
            logger.debug(f"barrier A={A:.3e}: min residual {worst_upper:.3e}")
            continue
        lower = supersolution_residual(params, profile, times, radii, w=w, sub=True)
        worst_lower = max(float(np.max(r)) for r in lower)
        if worst_lower > tol:
            logger.debug(f"barrier A={A:.3e}: max sub residual {worst_lower:.3e}")
            continue
        logger.debug(f"barrier found: eta={eta:.3e} A={A:.3e} s0={s0:.4f}")
        return params
    raise VerificationFailure(
        f"no barrier with A in {A_range} for d={profile.d} alpha={profile.alpha}"
    )


def check_comparison(sub: Run, sup: Run) -> float:
    """max over shared snapshots of (sub - super)_+.

    Raises:
        RangeError: The runs use different grids or start out of order.
    """
    if not np.array_equal(sub.grid.nodes, sup.grid.nodes):
        raise RangeError("compared runs must share a grid")
    if np.any(sub.snapshots[0].values > sup.snapshots[0].values + 1e-14):
        raise RangeError("initial data of the compared runs are not ordered")
    violation = 0.0
    for a, b in zip(sub.snapshots, sup.snapshots):
        if not math.isclose(a.time, b.time, rel_tol=1e-10, abs_tol=1e-14):
            raise RangeError(f"snapshot times {a.time} and {b.time} differ")
        violation = max(violation, float(np.max(a.values - b.values)))
    return max(0.0, violation)


def ordered_pair(
    grid: RadialGrid, rng: np.random.Generator
) -> Tuple[RadialField, RadialField]:
    """Random North data sub <= super at t = 0.

    sub = a tanh(r/l) and super = sub + b r^2 e^{-r^2}, with a, l and b drawn
    from rng; both vanish at the origin.
    """
    r = grid.nodes
    a, length, b = rng.uniform(0.2, 1.2), rng.uniform(0.05, 0.5), rng.uniform(0, 0.3)
    sub = a * np.tanh(r / length)
    sup = sub + b * r**2 * np.exp(-(r**2))
    return (
        RadialField(0.0, grid, sub, OriginBC.DIRICHLET_ZERO),
        RadialField(0.0, grid, sup, OriginBC.DIRICHLET_ZERO),
    )


def comparison_suite(
    grid: RadialGrid,
    d: int,
    pairs: int = 20,
    *,
    seed: int = 0,
    dt: float = 1e-3,
    t_end: float = 0.1,
) -> List[float]:
    """Largest ordering violation over random pairs, at grid and grid.refined().

    The refined resolution also halves dt. Runs of one resolution are evolved
    concurrently.
    """
    violations = []
    for resolution, step in ((grid, dt), (grid.refined(), 0.5 * dt)):
        rng = np.random.default_rng(seed)
        config = SimConfig(d=d, dt=step, t_span=(0.0, t_end), snapshot_every=10)
        jobs = []
        for _ in range(pairs):
            sub, sup = ordered_pair(resolution, rng)
            jobs += [(sub, config), (sup, config)]
        runs = run_resolutions(jobs)
        worst = max(
            check_comparison(runs[i], runs[i + 1]) for i in range(0, len(runs), 2)
        )
        logger.debug(f"comparison on {len(resolution.nodes)} nodes: {worst:.3e}")
        violations.append(worst)
    return violations


def expander_sandwich(
    profile: Profile,
    profile_alpha0: Profile,
    V: VariationSolution,
    W: VariationSolution,
    b: float,
) -> Tuple[Barrier, Barrier]:
    """Barriers of the self-similar flow around a sub-equator profile.

    u+ = min(psi_alpha0, psi + b e^{-s/2} V) and
    u- = max(0, psi - b e^{-s/2} W).

    V solves the y-equation along psi_alpha0 and W along psi_alpha.
    """
    if b <= 0:
        raise RangeError(f"b must be positive, got {b}")

    def upper(s: float, rho: np.ndarray) -> np.ndarray:
        psi, _ = profile.evaluate(rho)
        cap, _ = profile_alpha0.evaluate(rho)
        return np.minimum(cap, psi + b * math.exp(-0.5 * s) * V.evaluate(rho))

    def lower(s: float, rho: np.ndarray) -> np.ndarray:
        psi, _ = profile.evaluate(rho)
        return np.maximum(0.0, psi - b * math.exp(-0.5 * s) * W.evaluate(rho))

    return upper, lower


def _selfsimilar_values(run: Run) -> np.ndarray:
    values = run.values
    if run.label == "selfsim_perturbation":
        psi, _ = run.profile.evaluate(run.grid.nodes)
        values = values + psi
    return values


def sandwich_violation(run: Run, sandwich: Tuple[Barrier, Barrier]) -> float:
    """max over the run of (v - u+)_+ and (u- - v)_+."""
    upper, lower = sandwich
    rho = run.grid.nodes
    worst = 0.0
    for s, v in zip(run.times, _selfsimilar_values(run)):
        worst = max(
            worst,
            float(np.max(v - upper(s, rho))),
            float(np.max(lower(s, rho) - v)),
        )
    return max(0.0, worst)


def _bump(x, lo: float, hi: float) -> Tuple[np.ndarray, np.ndarray]:
    """exp(1 - 1/(1 - y^2)) on (lo, hi), y the centred coordinate, with derivative."""
    x = np.asarray(x, dtype=float)
    half = 0.5 * (hi - lo)
    y = (x - 0.5 * (hi + lo)) / half
    inside = np.abs(y) < 1
    q = np.where(inside, 1.0 - y**2, 1.0)
    value = np.where(inside, np.exp(1.0 - 1.0 / q), 0.0)
    slope = np.where(inside, value * (-2.0 * y / q**2) / half, 0.0)
    return value, slope


def bump_test_pair(
    support: Tuple[float, float, float, float],
    tau_amplitude: float = 1.0,
    field_amplitude: float = 1.0,
) -> TestFunctionPair:
    """Product bumps tau = a B(t) B(r) and g = b B(t) B(r) on the given support."""
    t_lo, t_hi, r_lo, r_hi = support

    def tau(t, r):
        bt, bt1 = _bump(t, t_lo, t_hi)
        br, br1 = _bump(r, r_lo, r_hi)
        a = tau_amplitude
        return a * bt * br, a * bt1 * br, a * bt * br1

    def radial(t, r):
        bt, _ = _bump(t, t_lo, t_hi)
        br, br1 = _bump(r, r_lo, r_hi)
        return field_amplitude * bt * br, field_amplitude * bt * br1

    return TestFunctionPair(tau, radial, support)


def energy_inequality_check(run: Run, tests: TestFunctionPair) -> Dict[str, float]:
    """Both sides of the local energy inequality for a corotational run.

    With u = (sin h x/r, cos h), |grad u|^2 = h_r^2 + (d-1) sin^2 h / r^2 and
    a radial test field psi^l = g x_l / r, the right-hand integrand is

        tau h_t^2 - (tau_t + g_r + (d-1)g/r)|grad u|^2 / 2 + tau_r h_r h_t
            + g h_r h_t + g_r h_r^2 + (d-1) g sin^2 h / r^3.

    Derivatives come from np.gradient over snapshots, so the run should keep
    every step. Space-time integrals use the trapezoidal rule with the weight
    |S^{d-1}| r^{d-1}.

    Returns:
        lhs, rhs, margin = lhs - rhs and normalized_margin.

    Raises:
        UnresolvedRegion: The support reaches below r_1, beyond r_dom, or
            outside the run's time span.
    """
    t_lo, t_hi, r_lo, r_hi = tests.support
    r = run.grid.nodes
    times = run.times
    if r_lo < r[1] or r_hi > r[-1]:
        raise UnresolvedRegion(
            f"test support [{r_lo}, {r_hi}] leaves the resolved [{r[1]}, {r[-1]}]"
        )
    if t_lo < times[0] or t_hi > times[-1]:
        raise UnresolvedRegion(f"test support ({t_lo}, {t_hi}) leaves the run")
    if len(times) < 3:
        raise UnresolvedRegion("energy check needs at least three snapshots")

    d = run.config.d
    h = run.values
    h_t = np.gradient(h, times, axis=0)
    h_r = np.gradient(h, r, axis=1)
    T, Rr = np.meshgrid(times, r, indexing="ij")
    safe_r = np.where(Rr > 0, Rr, 1.0)
    sin2 = np.sin(h) ** 2
    angular = np.where(Rr > 0, (d - 1) * sin2 / safe_r**2, 0.0)
    energy = h_r**2 + angular

    tau, tau_t, tau_r = tests.tau(T, Rr)
    g, g_r = tests.radial(T, Rr)
    divergence = g_r + np.where(Rr > 0, (d - 1) * g / safe_r, 0.0)
    terms = [
        tau * h_t**2,
        -0.5 * (tau_t + divergence) * energy,
        tau_r * h_r * h_t,
        g * h_r * h_t,
        g_r * h_r**2,
        np.where(Rr > 0, (d - 1) * g * sin2 / safe_r**3, 0.0),
    ]
    weight = sphere_area(d) * r ** (d - 1)

    def integrate(field: np.ndarray) -> float:
        return float(trapezoid(trapezoid(field * weight, r, axis=1), times))

    rhs = integrate(sum(terms))
    scale = integrate(sum(np.abs(term) for term in terms))
    lhs = 0.5 * float(trapezoid(tau[0] * energy[0] * weight, r))
    margin = lhs - rhs
    normalized = margin / (abs(lhs) + scale) if abs(lhs) + scale > 0 else 0.0
    logger.debug(
        f"energy check {run.label}: lhs={lhs:.6e} rhs={rhs:.6e} "
        f"normalized margin={normalized:.3e}"
    )
    return {"lhs": lhs, "rhs": rhs, "margin": margin, "normalized_margin": normalized}


def _trend(times: np.ndarray, series: np.ndarray) -> float:
    positive = (times > 0) & (series > 0)
    if np.count_nonzero(positive) < 3:
        return 0.0
    slope, _, _ = loglog_fit(times[positive], series[positive])
    return slope


def regularity_monitors(run: Run) -> Dict[str, Dict]:
    """Scale-invariant gradient monitors per snapshot with growth flags.

    Monitors: r|h_r|, (r + sqrt t)|h_r| / (1 + log_+(sqrt t / r)) and
    (t + r^2)|h_t|. A monitor is flagged as growing when its log-log slope in
    t exceeds GROWTH_SLOPE.
    """
    r = run.grid.nodes
    times = run.times
    keep = times > 0
    times = times[keep]
    h = run.values[keep]
    h_r = np.gradient(h, r, axis=1)
    h_t = np.gradient(h, times, axis=0) if len(times) > 1 else np.zeros_like(h)
    root_t = np.sqrt(times)[:, None]
    safe_r = np.where(r > 0, r, np.inf)
    allowance = 1.0 + np.log(np.maximum(1.0, root_t / safe_r))

    series = {
        "r_grad": np.max(r * np.abs(h_r), axis=1),
        "parabolic_grad": np.max((r + root_t) * np.abs(h_r) / allowance, axis=1),
        "time_derivative": np.max((times[:, None] + r**2) * np.abs(h_t), axis=1),
    }
    trend = {name: _trend(times, values) for name, values in series.items()}
    return {
        "times": times,
        "series": series,
        "sup": {name: float(np.max(values)) for name, values in series.items()},
        "trend": trend,
        "growing": {name: slope > GROWTH_SLOPE for name, slope in trend.items()},
    }


def holder_monitor(run: Run, r_window: float) -> Dict[str, np.ndarray]:
    """Hoelder behaviour near the origin, per snapshot with t > 0.

    beta is the fitted exponent of |h - h(0)| ~ C r^beta on (r_1, r_window],
    delta = beta/(beta + 1), and seminorm the C^delta seminorm on [0, r_window].
    """
    r = run.grid.nodes
    inside = r <= r_window
    if np.count_nonzero(inside) < 4:
        raise UnresolvedRegion(f"r_window={r_window} holds fewer than four nodes")
    rw = r[inside]
    gaps = np.abs(rw[:, None] - rw[None, :])
    off_diagonal = gaps > 0
    betas, deltas, seminorms, times = [], [], [], []
    for snap in run.snapshots:
        if snap.time <= 0:
            continue
        h = snap.values[inside]
        rise = np.abs(h[1:] - h[0])
        fit = rise > 0
        beta = math.nan
        if np.count_nonzero(fit) >= 3:
            beta, _, _ = loglog_fit(rw[1:][fit], rise[fit])
        delta = beta / (beta + 1) if math.isfinite(beta) and beta > 0 else math.nan
        if math.isfinite(delta):
            jumps = np.abs(h[:, None] - h[None, :])
            ratio = jumps[off_diagonal] / gaps[off_diagonal] ** delta
            seminorm = float(np.max(ratio))
        else:
            seminorm = math.nan
        times.append(snap.time)
        betas.append(beta)
        deltas.append(delta)
        seminorms.append(seminorm)
    return {
        "times": np.array(times),
        "beta": np.array(betas),
        "delta": np.array(deltas),
        "seminorm": np.array(seminorms),
    }


def theta_functional(h1: np.ndarray, h2: np.ndarray) -> np.ndarray:
    """theta = (1 - cos(h1 - h2)) / (cos h1 cos h2), as 2 sin^2((h1-h2)/2) / (...)."""
    return 2.0 * np.sin(0.5 * (h1 - h2)) ** 2 / (np.cos(h1) * np.cos(h2))


def theta_stability(
    run1: Run, run2: Run, delta: float = 1e-3
) -> Tuple[np.ndarray, float]:
    """sup_r theta per shared snapshot and C = max_t sup theta(t) / sup theta(0).

    Raises:
        DomainViolation: A run leaves [0, pi/2 - delta].
    """
    top = EQUATOR - delta
    for run in (run1, run2):
        values = run.values
        if np.min(values) < -1e-12 or np.max(values) > top:
            raise DomainViolation(
                f"run {run.label} leaves [0, pi/2 - {delta}]: "
                f"range [{np.min(values):.4f}, {np.max(values):.4f}]"
            )
    sup_theta = np.array(
        [
            float(np.max(theta_functional(a.values, b.values)))
            for a, b in zip(run1.snapshots, run2.snapshots)
        ]
    )
    if sup_theta[0] > 0:
        constant = float(np.max(sup_theta) / sup_theta[0])
    else:
        constant = 0.0 if np.max(sup_theta) == 0 else math.inf
    return sup_theta, constant


def hardy_constant(d: int) -> Fraction:
    """4(d-1)/(d-2)^2, exact."""
    if d <= 2:
        raise RangeError(f"the Hardy constant needs d >= 3, got {d}")
    return Fraction(4 * (d - 1), (d - 2) ** 2)


def hardy_dichotomy(d: int) -> bool:
    """True in the uniqueness regime, where the Hardy constant is below 1."""
    return hardy_constant(d) < 1
