"""Shooting solver for expander profiles and their companion linear equations.

A profile psi_alpha solves the expander equation with psi(0) = 0 (North) or
pi (South) and psi'(0) = alpha. The map alpha -> psi_alpha(infinity) is sampled
by scans, inverted by bisection, and its critical points alpha0 and alpha* are
located from the equator crossing and from the positivity of the variation
phi_alpha = d psi_alpha / d alpha.

South profiles are obtained exactly from North ones through psi -> pi - psi.
"""

import logging
import math
from dataclasses import replace
from functools import lru_cache
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import brentq

from .asymptotics import tail_extrapolate, tail_fit
from .models import (
    BranchScan,
    CriticalParams,
    DomainViolation,
    NoBracket,
    Pole,
    PositivityLost,
    Profile,
    ProfileParams,
    RangeError,
    ShootResult,
    Trajectory,
    VariationKind,
    VariationSolution,
    VectorField,
)
from .ode_core import expander_field, integrate_adaptive, series_launch
from .utils import bisect_predicate, expand_until, parallel_map, sign_changes

logger = logging.getLogger("expanderlab")

EQUATOR = math.pi / 2
TAIL_ORDER = 3
DEFAULT_ALPHA_RANGE = (0.0, 100.0)
DEFAULT_SCAN_POINTS = 200


def tail_window(rho_max: float) -> Tuple[float, float]:
    return max(10.0, 0.5 * rho_max), rho_max


def _crossing_radii(trajectory: Trajectory) -> Tuple[float, ...]:
    gap = trajectory.states[:, 0] - EQUATOR
    radii = []
    for i in sign_changes(gap):
        a, b = trajectory.nodes[i], trajectory.nodes[i + 1]
        radii.append(
            brentq(lambda r: trajectory.interpolate(r)[0] - EQUATOR, a, b, xtol=1e-14)
        )
    return tuple(float(r) for r in radii)


def _count_crossings(trajectory: Trajectory, psi_inf: float) -> int:
    gap = np.append(trajectory.states[:, 0], psi_inf) - EQUATOR
    return len(sign_changes(gap))


def solve_profile(params: ProfileParams) -> Profile:
    """Solve the expander equation by shooting from the origin series.

    The limit psi(infinity) is the constant term of an order-3 fit of
    L + sum c_k rho^(-2k) on [max(10, rho_max/2), rho_max]; its error is the
    fit residual plus the change from the order-2 fit.

    Example:
        ```python
        profile = solve_profile(ProfileParams(d=3, alpha=0.5))
        print(profile.psi_inf, profile.crossings_of_equator)
        ```
    """
    if params.pole is Pole.SOUTH:
        north = solve_profile(replace(params, pole=Pole.NORTH))
        return reflect(north)

    launch = series_launch(
        params.d, params.alpha, Pole.NORTH, params.rho0, params.series_order
    )
    trajectory = integrate_adaptive(
        expander_field(params.d),
        [launch.value, launch.derivative],
        (params.rho0, params.rho_max),
        params.tol,
    )
    psi = trajectory.states[:, 0]
    if np.min(psi) < -1e-8 or np.max(psi) > math.pi + 1e-8:
        raise DomainViolation(
            f"profile d={params.d} alpha={params.alpha} left [0, pi]"
        )

    window = tail_window(params.rho_max)
    coeffs, residual = tail_fit(trajectory, window, order=TAIL_ORDER)
    lower, _ = tail_extrapolate(trajectory, window, order=TAIL_ORDER - 1)
    psi_inf = float(coeffs[0])
    profile = Profile(
        params=params,
        trajectory=trajectory,
        psi_inf=psi_inf,
        psi_inf_error=residual + abs(psi_inf - lower),
        crossings_of_equator=_count_crossings(trajectory, psi_inf),
        crossing_radii=_crossing_radii(trajectory),
        tail=tuple(float(c) for c in coeffs),
        launch=launch,
        psi_end=float(psi[-1]),
    )
    logger.debug(
        f"profile d={params.d} alpha={params.alpha:.10g}: psi_inf={psi_inf:.12f} "
        f"crossings={profile.crossings_of_equator}"
    )
    return profile


def reflect(profile: Profile) -> Profile:
    """The profile pi - psi with the opposite pole."""
    pole = Pole.SOUTH if profile.params.pole is Pole.NORTH else Pole.NORTH
    traj = profile.trajectory
    sign = np.array([-1.0, -1.0])
    shift = np.array([math.pi, 0.0])
    launch = profile.launch
    return Profile(
        params=replace(profile.params, pole=pole),
        trajectory=Trajectory(
            traj.nodes,
            shift + sign * traj.states,
            traj.tolerance_used,
            None if traj.slopes is None else sign * traj.slopes,
        ),
        psi_inf=math.pi - profile.psi_inf,
        psi_inf_error=profile.psi_inf_error,
        crossings_of_equator=profile.crossings_of_equator,
        crossing_radii=profile.crossing_radii,
        tail=(math.pi - profile.tail[0],) + tuple(-c for c in profile.tail[1:]),
        launch=replace(
            launch,
            pole=pole,
            value=math.pi - launch.value,
            derivative=-launch.derivative,
            second_derivative=-launch.second_derivative,
        ),
        psi_end=math.pi - profile.psi_end,
    )


@lru_cache(maxsize=8192)
def cached_profile(
    d: int, alpha: float, rho_max: float = 30.0, tol: float = 1e-10
) -> Profile:
    """North profile memoised on its parameters (profiles are immutable)."""
    return solve_profile(ProfileParams(d=d, alpha=alpha, rho_max=rho_max, tol=tol))


def clear_profile_cache() -> None:
    cached_profile.cache_clear()


def decay_constant(profile: Profile, rho_min: float = 5.0) -> float:
    """Smallest C with |psi'| <= C / rho^3 at every node beyond rho_min."""
    mask = profile.nodes >= rho_min
    return float(np.max(profile.nodes[mask] ** 3 * np.abs(profile.dpsi[mask])))


def crossings_beyond(profile: Profile, radius: float) -> int:
    """Equator crossings at radii > radius, including one beyond rho_max."""
    inside = sum(1 for r in profile.crossing_radii if r > radius)
    at_infinity = profile.crossings_of_equator - len(profile.crossing_radii)
    return inside + at_infinity


def scan_grid(alpha_range: Tuple[float, float], n: int) -> np.ndarray:
    lo, hi = alpha_range
    if not (0 <= lo < hi) or n < 2:
        raise RangeError(f"invalid scan range {alpha_range} with n={n}")
    if lo == 0:
        return np.concatenate(([0.0], np.geomspace(hi * 1e-4, hi, n - 1)))
    return np.geomspace(lo, hi, n)


def scan_branches(
    d: int,
    alpha_range: Tuple[float, float] = DEFAULT_ALPHA_RANGE,
    n: int = DEFAULT_SCAN_POINTS,
    rho_max: float = 30.0,
    tol: float = 1e-10,
) -> BranchScan:
    """Sample alpha -> psi_alpha(infinity) on a log-uniform alpha grid.

    Profiles for distinct alpha are solved concurrently when
    EXPANDERLAB_THREADS allows; results keep the alpha order.
    """
    alphas = scan_grid(alpha_range, n)
    profiles = parallel_map(
        lambda a: cached_profile(d, float(a), rho_max, tol), alphas
    )
    return BranchScan(
        d=d,
        alphas=alphas,
        limits=np.array([p.psi_inf for p in profiles]),
        crossings=np.array([p.crossings_of_equator for p in profiles]),
    )


def _brackets(scan: BranchScan, ell: float, branch: int) -> List[Tuple[float, float]]:
    f = scan.limits - ell
    out = []
    for i in range(len(f) - 1):
        if f[i] * f[i + 1] > 0:
            continue
        if branch in (scan.crossings[i], scan.crossings[i + 1]):
            out.append((float(scan.alphas[i]), float(scan.alphas[i + 1])))
    return out


def _refined_scan(
    scan: BranchScan, branch: int, rho_max: float, tol: float, n: int = 50
) -> Optional[BranchScan]:
    """Finer scan around the largest limit on the branch.

    Coarse grids can step over the peak of a branch.
    """
    on_branch = np.flatnonzero(scan.crossings == branch)
    if len(on_branch) == 0:
        return None
    peak = on_branch[np.argmax(scan.limits[on_branch])]
    lo = scan.alphas[max(peak - 1, 0)]
    hi = scan.alphas[min(peak + 1, len(scan.alphas) - 1)]
    if lo <= 0:
        lo = hi * 1e-3
    return scan_branches(scan.d, (float(lo), float(hi)), n, rho_max, tol)


def shoot_for_limit(
    d: int,
    ell: float,
    branch: int,
    tol: float = 1e-8,
    alpha_range: Tuple[float, float] = DEFAULT_ALPHA_RANGE,
    n: int = DEFAULT_SCAN_POINTS,
    rho_max: float = 30.0,
) -> ShootResult:
    """Find alpha on the given branch with |psi_alpha(infinity) - ell| <= tol.

    Brackets come from a coarse scan (then a refined one around the branch
    maximum if needed); among several brackets the smallest alpha wins.
    The bracket is bisected until both ends lie on the branch and then
    polished with Brent's method.

    Raises:
        RangeError: ell outside (0, pi) or branch not 0 or 1.
        NoBracket: ell is not attained on the branch.
    """
    if not 0 < ell < math.pi:
        raise RangeError(f"ell must lie in (0, pi), got {ell}")
    if branch not in (0, 1):
        raise RangeError(f"branch must be 0 or 1, got {branch}")
    profile_tol = min(1e-10, 0.01 * tol)

    scan = scan_branches(d, alpha_range, n, rho_max, profile_tol)
    brackets = _brackets(scan, ell, branch)
    if not brackets:
        finer = _refined_scan(scan, branch, rho_max, profile_tol)
        brackets = _brackets(finer, ell, branch) if finer is not None else []
    if not brackets:
        raise NoBracket(f"limit {ell} not attained on branch {branch} for d={d}")

    def residual(alpha: float) -> float:
        return cached_profile(d, alpha, rho_max, profile_tol).psi_inf - ell

    def on_branch(alpha: float) -> bool:
        profile = cached_profile(d, alpha, rho_max, profile_tol)
        return profile.crossings_of_equator == branch

    lo, hi = brackets[0]
    f_lo = residual(lo)
    history = [(lo, hi)]
    iterations = 0
    # bisect while the bracket straddles a change of branch
    while not (on_branch(lo) and on_branch(hi)):
        mid = 0.5 * (lo + hi)
        f_mid = residual(mid)
        if f_mid * f_lo > 0:
            lo, f_lo = mid, f_mid
        else:
            hi = mid
        history.append((lo, hi))
        logger.debug(f"shoot d={d} ell={ell}: bracket [{lo:.14g}, {hi:.14g}]")
        iterations += 1
        if iterations >= 200 or hi - lo <= 1e-15 * hi:
            break

    if on_branch(lo) and on_branch(hi):
        alpha, info = brentq(
            residual, lo, hi, xtol=1e-14, maxiter=200, full_output=True
        )
        iterations += info.iterations
    else:
        ends = [a for a in (lo, hi) if on_branch(a)]
        if not ends:
            raise NoBracket(f"no alpha on branch {branch} near ell={ell}")
        alpha = min(ends, key=lambda a: abs(residual(a)))

    best = cached_profile(d, alpha, rho_max, profile_tol)
    if not on_branch(alpha) or abs(best.psi_inf - ell) > tol:
        raise NoBracket(f"root for ell={ell} on branch {branch} did not converge")
    return ShootResult(
        alpha=best.alpha,
        target_ell=ell,
        branch=branch,
        bracket_history=tuple(history),
        iterations=iterations,
        psi_inf=best.psi_inf,
    )


def south_profile(
    d: int, ell: float, tol: float = 1e-8, rho_max: float = 30.0
) -> Profile:
    """Profile with psi(0) = pi and limit ell, one equator crossing.

    It is pi minus the branch-1 North profile with limit pi - ell.

    Raises:
        RangeError: ell >= pi/2.
        NoBracket: ell < pi/2 - delta*.
    """
    if not 0 < ell < EQUATOR:
        raise RangeError(f"south profiles need ell in (0, pi/2), got {ell}")
    shot = shoot_for_limit(d, math.pi - ell, branch=1, tol=tol, rho_max=rho_max)
    north = cached_profile(d, shot.alpha, rho_max, min(1e-10, 0.01 * tol))
    return reflect(north)


def weight_z(rho) -> np.ndarray:
    """Z = rho on [0, 1], rho^2 on [2, inf), monotone cubic Hermite in between."""
    rho = np.asarray(rho, dtype=float)
    t = rho - 1.0
    middle = 1.0 + t + 3.0 * t**2 - t**3
    return np.where(rho <= 1.0, rho, np.where(rho >= 2.0, rho**2, middle))


def _variation_field(
    d: int, lam: Callable[[float], float]
) -> VectorField:
    """Profile equation augmented with its linearization.

    u'' + c u' - (d-1)cos(2psi)/rho^2 u + lam u = 0.
    """
    k = d - 1

    def rhs(rho: float, y: np.ndarray) -> np.ndarray:
        psi, dpsi, u, du = y
        c = k / rho + 0.5 * rho
        ddpsi = -c * dpsi + k * math.sin(2 * psi) / (2 * rho * rho)
        ddu = -c * du + (k * math.cos(2 * psi) / (rho * rho) - lam(rho)) * u
        return np.array([dpsi, ddpsi, du, ddu])

    return VectorField(4, rhs)


def _solve_linear(
    profile: Profile,
    kind: VariationKind,
    lam: Callable[[float], float],
    lam0: float = 0.0,
    lam_sing: float = 0.0,
    limit_of_rho_u: bool = False,
) -> VariationSolution:
    """Integrate a linear companion equation along a North profile.

    lam is the zeroth-order coefficient, behaving like lam_sing/rho + lam0
    near the origin; the launch u = rho + c2 rho^2 + c rho^3 matches it.
    """
    if profile.params.pole is not Pole.NORTH:
        raise RangeError("linear companions are solved along North profiles")
    d, alpha = profile.d, profile.alpha
    rho0 = profile.nodes[0]
    c2 = -lam_sing / (d + 1)
    c = -(0.5 + 2 * (d - 1) * alpha**2 + lam0 + lam_sing * c2) / (2 * d + 4)
    u0 = rho0 + c2 * rho0**2 + c * rho0**3
    du0 = 1.0 + 2 * c2 * rho0 + 3 * c * rho0**2

    field = _variation_field(d, lam)
    launch = profile.launch
    full = integrate_adaptive(
        field,
        [launch.value, launch.derivative, u0, du0],
        (rho0, profile.params.rho_max),
        profile.params.tol,
        t_eval=profile.nodes,
    )
    trajectory = Trajectory(
        full.nodes, full.states[:, 2:], full.tolerance_used, full.slopes[:, 2:]
    )
    if limit_of_rho_u:
        rho = trajectory.nodes
        u, du = trajectory.states[:, 0], trajectory.states[:, 1]
        scaled = Trajectory(
            rho,
            np.column_stack([rho * u, u + rho * du]),
            trajectory.tolerance_used,
            np.column_stack([u + rho * du, 2 * du + rho * trajectory.slopes[:, 1]]),
        )
        limit, _ = tail_extrapolate(scaled, tail_window(rho[-1]), order=2)
    else:
        window = tail_window(trajectory.nodes[-1])
        limit, _ = tail_extrapolate(trajectory, window, order=2)
    return VariationSolution(
        kind=kind,
        base=profile,
        trajectory=trajectory,
        limit=limit,
        positive=bool(np.all(trajectory.states[:, 0] > 0)),
    )


def solve_variation_phi(profile: Profile) -> VariationSolution:
    """phi_alpha = d psi_alpha / d alpha, with phi(0) = 0 and phi'(0) = 1."""
    return _solve_linear(profile, VariationKind.PHI_ALPHA, lambda rho: 0.0)


def solve_variation_underline(profile: Profile) -> VariationSolution:
    """underline-phi = rho psi'/alpha, taken directly from the profile.

    It solves the phi_alpha equation with an extra +u term. The residual of
    that equation is evaluated at every node with psi''' obtained by
    differentiating the profile equation, relative to the size of its terms.
    """
    if profile.alpha == 0:
        raise RangeError("underline-phi is undefined for alpha = 0")
    if profile.params.pole is not Pole.NORTH:
        raise RangeError("linear companions are solved along North profiles")
    d, alpha, k = profile.d, profile.alpha, profile.d - 1
    rho = profile.nodes
    psi, d1 = profile.psi, profile.dpsi
    d2 = profile.trajectory.slopes[:, 1]
    c = k / rho + 0.5 * rho
    dc = -k / rho**2 + 0.5
    singular = np.cos(2 * psi) * d1 / rho**2 - np.sin(2 * psi) / rho**3
    d3 = -c * d2 - dc * d1 + k * singular

    u = rho * d1 / alpha
    du = (d1 + rho * d2) / alpha
    ddu = (2 * d2 + rho * d3) / alpha
    potential = k * np.cos(2 * psi) / rho**2
    terms = [ddu, c * du, potential * u, u]
    residual = ddu + c * du - potential * u + u
    scale = np.maximum(sum(np.abs(t) for t in terms), 1e-300)

    trajectory = Trajectory(
        rho,
        np.column_stack([u, du]),
        profile.params.tol,
        np.column_stack([du, ddu]),
    )
    return VariationSolution(
        kind=VariationKind.UNDERLINE_PHI,
        base=profile,
        trajectory=trajectory,
        limit=0.0,
        positive=bool(np.all(u > 0)),
        residual=float(np.max(np.abs(residual) / scale)),
    )


def solve_w(profile: Profile, kappa: float) -> VariationSolution:
    """Positive solution of the phi_alpha equation with the extra +kappa w / Z term.

    Raises:
        RangeError: kappa < 0.
        PositivityLost: w vanishes at a node or has a nonpositive limit.
    """
    if kappa < 0:
        raise RangeError(f"kappa must be nonnegative, got {kappa}")
    solution = _solve_linear(
        profile,
        VariationKind.W,
        lambda rho: kappa / float(weight_z(rho)),
        lam_sing=kappa,
    )
    solution = replace(solution, parameter=kappa)
    if not solution.positive:
        first = solution.nodes[np.argmax(solution.values <= 0)]
        raise PositivityLost(f"w vanished near rho={first:.4g} for kappa={kappa}")
    if solution.limit <= 0:
        raise PositivityLost(f"w has limit {solution.limit:.3g} for kappa={kappa}")
    return solution


def kappa_threshold(
    profile: Profile, tol: float = 1e-3, kappa_max: float = 1e6
) -> Tuple[float, float]:
    """Bracket (kappa_lo, kappa_hi) of the positivity threshold of w."""

    def loses_positivity(kappa: float) -> bool:
        try:
            solve_w(profile, kappa)
        except PositivityLost:
            return True
        return False

    if loses_positivity(0.0):
        raise PositivityLost("w is not positive even for kappa = 0")
    lo, hi = expand_until(loses_positivity, 1.0, limit=kappa_max)
    lo, hi, _ = bisect_predicate(loses_positivity, lo, hi, tol * max(1.0, hi))
    logger.debug(f"kappa threshold for alpha={profile.alpha}: [{lo:.6g}, {hi:.6g}]")
    return lo, hi


def solve_y(profile: Profile) -> VariationSolution:
    """Solution of the phi_alpha equation with an extra +y/2 term; limit is of rho*y."""
    return _solve_linear(
        profile, VariationKind.Y, lambda rho: 0.5, lam0=0.5, limit_of_rho_u=True
    )


def solve_v_upper(profile_alpha0: Profile) -> VariationSolution:
    """The y-equation along the profile at alpha0 (upper barrier component)."""
    solution = solve_y(profile_alpha0)
    return replace(solution, kind=VariationKind.V_UPPER)


def solve_w_upper(profile: Profile) -> VariationSolution:
    """The y-equation along the profile itself (lower barrier component)."""
    solution = solve_y(profile)
    return replace(solution, kind=VariationKind.W_UPPER)


def _reaches_equator(d: int, rho_max: float, tol: float) -> Callable[[float], bool]:
    def predicate(alpha: float) -> bool:
        profile = cached_profile(d, alpha, rho_max, tol)
        return profile.psi_inf >= EQUATOR or float(np.max(profile.psi)) >= EQUATOR

    return predicate


def _phi_loses_positivity(
    d: int, rho_max: float, tol: float
) -> Callable[[float], bool]:
    def predicate(alpha: float) -> bool:
        phi = solve_variation_phi(cached_profile(d, alpha, rho_max, tol))
        return not phi.positive or phi.limit <= 0

    return predicate


def critical_params(
    d: int, tol: float = 1e-8, rho_max: float = 30.0
) -> CriticalParams:
    """Locate alpha0, alpha*, ell* = psi_{alpha*}(infinity) and delta* = ell* - pi/2.

    For d >= 7 both alphas are infinite and ell*, delta* are NaN.

    Example:
        ```python
        crit = critical_params(3)
        assert crit.alpha0 < crit.alpha_star and crit.delta_star > 0
        ```
    """
    if d >= 7:
        return CriticalParams(math.inf, math.inf, math.nan, math.nan, tol)
    if d < 3:
        raise RangeError(f"dimension must be >= 3, got {d}")
    profile_tol = min(1e-10, 0.01 * tol)

    reaches = _reaches_equator(d, rho_max, profile_tol)
    lo, hi = expand_until(reaches, 0.5, limit=1e4)
    lo, hi, _ = bisect_predicate(reaches, lo, hi, tol)
    alpha0 = 0.5 * (lo + hi)

    fails = _phi_loses_positivity(d, rho_max, profile_tol)
    lo = alpha0
    hi = alpha0 * 1.1
    while not fails(hi):
        lo, hi = hi, hi * 1.1
        if hi > 1e4:
            raise NoBracket(f"phi_alpha stays positive up to alpha={lo} for d={d}")
    lo, hi, _ = bisect_predicate(fails, lo, hi, tol)
    alpha_star = 0.5 * (lo + hi)

    ell_star = cached_profile(d, alpha_star, rho_max, profile_tol).psi_inf
    logger.debug(
        f"critical d={d}: alpha0={alpha0:.10f} alpha*={alpha_star:.10f} "
        f"ell*={ell_star:.10f}"
    )
    return CriticalParams(alpha0, alpha_star, ell_star, ell_star - EQUATOR, tol)


def phi_limit_sign_changes(
    d: int, alphas: Sequence[float], rho_max: float = 30.0, tol: float = 1e-10
) -> List[Tuple[float, float]]:
    """Consecutive alpha pairs where phi_alpha(infinity) changes sign."""
    alphas = np.asarray(alphas, dtype=float)
    limits = parallel_map(
        lambda a: solve_variation_phi(cached_profile(d, float(a), rho_max, tol)).limit,
        alphas,
    )
    return [(float(alphas[i]), float(alphas[i + 1])) for i in sign_changes(limits)]


def crossing_radius_bound(
    d: int, alphas: Sequence[float], rho_max: float = 30.0, tol: float = 1e-10
) -> float:
    """Smallest radius beyond which every scanned profile crosses pi/2 at most once."""
    profiles = parallel_map(
        lambda a: cached_profile(d, float(a), rho_max, tol), np.asarray(alphas)
    )
    bound = 0.0
    for profile in profiles:
        radii = list(profile.crossing_radii)
        radii += [math.inf] * (profile.crossings_of_equator - len(radii))
        if len(radii) >= 2:
            bound = max(bound, radii[-2])
    return bound
