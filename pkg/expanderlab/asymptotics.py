"""Large-rho asymptotics: tail extrapolation, decay fits and the basis at infinity.

Linearized equations along a profile take the form

    phi'' + ((d-1)/rho + rho/2) phi' - V(rho) phi = 0,    |V| <= C0/rho^2,

and admit solutions phi_1 ~ rho^-d exp(-rho^2/4) and phi_2 -> 1. Limits of
solutions converge at the rate 1/rho^2, which is what the tail fits exploit.
"""

import logging
import math
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial.polynomial import polyfit, polyval

from .models import (
    BadFit,
    DecayFit,
    Potential,
    Profile,
    RangeError,
    Trajectory,
    VariationKind,
    VariationSolution,
    VectorField,
)
from .ode_core import integrate_adaptive, step_defect
from .utils import loglog_fit, parallel_map

logger = logging.getLogger("expanderlab")

MIN_TAIL_NODES = 16
DENSE_TAIL_SAMPLES = 64


def tail_fit(
    trajectory: Trajectory,
    window: Tuple[float, float],
    order: int = 1,
    component: int = 0,
    max_residual: float = 1e-6,
) -> Tuple[np.ndarray, float]:
    """Least-squares fit of L + sum_k c_k rho^(-2k), k = 1..order, on window.

    Returns the coefficients (L, c_1, ..., c_order) and the RMS residual.
    Node values inside the window are used when there are enough of them;
    otherwise the dense output is sampled.

    Raises:
        RangeError: The window is not inside the trajectory or starts below 10.
        BadFit: RMS residual above max_residual * max(1, max |value|).
    """
    rho_a, rho_b = window
    lo, hi = trajectory.span
    if rho_a < 10:
        raise RangeError(f"tail window must start at rho >= 10, got {rho_a}")
    if rho_a >= rho_b or rho_a < lo - 1e-12 or rho_b > hi + 1e-12:
        raise RangeError(f"tail window {window} not inside [{lo}, {hi}]")

    mask = (trajectory.nodes >= rho_a) & (trajectory.nodes <= rho_b)
    if np.count_nonzero(mask) >= MIN_TAIL_NODES:
        rho = trajectory.nodes[mask]
        values = trajectory.states[mask, component]
    else:
        rho = np.linspace(rho_a, rho_b, DENSE_TAIL_SAMPLES)
        values = trajectory.interpolate(rho)[:, component]

    x = rho**-2
    coeffs = polyfit(x, values, order)
    residual = float(np.sqrt(np.mean((values - polyval(x, coeffs)) ** 2)))
    scale = max(1.0, float(np.max(np.abs(values))))
    if residual > max_residual * scale:
        raise BadFit(
            f"tail fit residual {residual:.2e} on {window} exceeds "
            f"{max_residual:.1e}"
        )
    return np.asarray(coeffs), residual


def tail_extrapolate(
    trajectory: Trajectory,
    window: Tuple[float, float],
    order: int = 1,
    component: int = 0,
    max_residual: float = 1e-6,
) -> Tuple[float, float]:
    """Limit L of a trajectory component from the model L + c/rho^2 (+ ...).

    Example:
        ```python
        limit, error = tail_extrapolate(profile.trajectory, (15.0, 30.0))
        ```
    """
    coeffs, residual = tail_fit(trajectory, window, order, component, max_residual)
    return float(coeffs[0]), residual


def fit_decay(
    rho: Sequence[float],
    values: Sequence[float],
    model: str = "power",
    d: Optional[int] = None,
    max_residual: float = 0.1,
) -> DecayFit:
    """Fit values ~ prefactor * rho^exponent by least squares in log-log.

    In gaussian_weighted mode the values are first divided by
    rho^(1-d) exp(-rho^2/4); the prefactor then carries the sign of the data.

    Raises:
        RangeError: Fewer than 10 points or a span of less than a factor 3.
        BadFit: RMS log residual above max_residual.
    """
    rho = np.asarray(rho, dtype=float)
    values = np.asarray(values, dtype=float)
    if len(rho) < 10 or rho.max() < 3 * rho.min():
        raise RangeError("decay fits need >= 10 points spanning a factor of 3")
    if model == "gaussian_weighted":
        if d is None:
            raise RangeError("gaussian_weighted fits need the dimension d")
        # ratio in log space, so deep tails do not underflow
        log_weight = (1 - d) * np.log(rho) - rho**2 / 4
        logs = np.log(np.abs(values)) - log_weight
        slope, intercept = np.polyfit(np.log(rho), logs, 1)
        residual = float(
            np.sqrt(np.mean((logs - (slope * np.log(rho) + intercept)) ** 2))
        )
        sign = float(np.sign(np.median(values)))
    elif model == "power":
        slope, intercept, residual = loglog_fit(rho, values)
        sign = 1.0
    else:
        raise RangeError(f"unknown decay model {model!r}")
    if residual >= max_residual:
        raise BadFit(f"{model} decay fit residual {residual:.3f} >= {max_residual}")
    return DecayFit(float(slope), sign * math.exp(intercept), residual, model)


def sampled_bound(
    potential: Callable[[np.ndarray], np.ndarray], rho_range: Tuple[float, float]
) -> float:
    """Smallest C0 with |V| <= C0/rho^2 and |V'| <= C0/rho^3.

    Both bounds are checked at 100 log-spaced points of rho_range.
    """
    rho = np.geomspace(rho_range[0], rho_range[1], 100)
    V = np.asarray(potential(rho), dtype=float)
    dV = np.gradient(V, rho)
    return float(max(np.max(rho**2 * np.abs(V)), np.max(rho**3 * np.abs(dV))))


def make_potential(
    func: Callable[[np.ndarray], np.ndarray],
    name: str,
    rho_range: Tuple[float, float] = (10.0, 30.0),
) -> Potential:
    return Potential(func, sampled_bound(func, rho_range), name, rho_range)


def zero_potential() -> Potential:
    return make_potential(
        lambda rho: np.zeros_like(np.asarray(rho, dtype=float)), "zero"
    )


def inverse_square_potential(C0: float, name: str = "inverse_square") -> Potential:
    """V = C0 / rho^2 (either sign)."""
    return make_potential(lambda rho: C0 / np.asarray(rho, dtype=float) ** 2, name)


def profile_potential(profile: Profile) -> Potential:
    """Linearization potential V_alpha = (d-1) cos(2 psi_alpha) / rho^2."""
    k = profile.d - 1

    def V(rho):
        psi, _ = profile.evaluate(rho)
        return k * np.cos(2 * psi) / np.asarray(rho, dtype=float) ** 2

    return make_potential(V, f"V_alpha(d={profile.d}, alpha={profile.alpha:g})")


def crossing_potential(profile: Profile) -> Potential:
    """V = -(d-1)/(2 rho^2) sin(2 phi)/phi with phi = psi - pi/2.

    phi itself solves the linear equation with this potential, so zeros of
    phi are equator crossings of the profile.
    """
    k = profile.d - 1

    def V(rho):
        psi, _ = profile.evaluate(rho)
        phi = psi - math.pi / 2
        # sin(2 phi)/phi = 2 sinc(2 phi / pi)
        return -k * np.sinc(2 * phi / math.pi) / np.asarray(rho, dtype=float) ** 2

    return make_potential(V, f"crossing(d={profile.d}, alpha={profile.alpha:g})")


def linear_field(potential: Potential, d: int) -> VectorField:
    """phi'' = -((d-1)/rho + rho/2) phi' + V(rho) phi as a first-order system."""
    k = d - 1

    def rhs(rho: float, y: np.ndarray) -> np.ndarray:
        V = float(potential.eval(np.asarray(rho)))
        return np.array([y[1], -(k / rho + 0.5 * rho) * y[1] + V * y[0]])

    return VectorField(2, rhs)


def _limit_window(rho_lo: float, rho_max: float) -> Tuple[float, float]:
    return max(10.0, 0.5 * rho_max, rho_lo + 2.0), rho_max


def basis_at_infinity(
    potential: Potential,
    d: int,
    R: float = 10.0,
    rho_max: float = 30.0,
    tol: float = 1e-10,
) -> Tuple[VariationSolution, VariationSolution]:
    """Solutions phi_1 ~ rho^-d exp(-rho^2/4) and phi_2 -> 1 on [R, rho_max].

    phi_2 is integrated forward from (1, 0) at R and renormalized to tend to
    1. phi_1 is integrated backward from rho_max, where it is the growing mode,
    starting from the leading asymptotics.
    """
    if not 0 < R < rho_max:
        raise RangeError(f"need 0 < R < rho_max, got R={R}, rho_max={rho_max}")
    field = linear_field(potential, d)

    raw2 = integrate_adaptive(field, [1.0, 0.0], (R, rho_max), tol)
    limit, _ = tail_extrapolate(raw2, _limit_window(R, rho_max), order=2)
    if limit == 0:
        raise BadFit("phi_2 has a vanishing limit")
    traj2 = Trajectory(raw2.nodes, raw2.states / limit, tol, raw2.slopes / limit)
    phi2 = VariationSolution(
        VariationKind.PHI2,
        None,
        traj2,
        limit=1.0,
        positive=bool(np.all(traj2.states[:, 0] > 0)),
        residual=step_defect(field, raw2, tol),
    )

    # unit data at rho_max, rescaled afterwards to avoid underflow in the solver
    start = [1.0, -d / rho_max - 0.5 * rho_max]
    raw1 = integrate_adaptive(field, start, (R, rho_max), tol, backward=True)
    scale = math.exp(-d * math.log(rho_max) - rho_max**2 / 4)
    traj1 = Trajectory(raw1.nodes, raw1.states * scale, tol, raw1.slopes * scale)
    phi1 = VariationSolution(
        VariationKind.PHI1,
        None,
        traj1,
        limit=0.0,
        positive=bool(np.all(traj1.states[:, 0] > 0)),
        residual=step_defect(field, raw1, tol),
    )
    logger.debug(
        f"basis for {potential.name}: phi_2 raw limit {limit:.6g}, "
        f"{len(traj1.nodes)}/{len(traj2.nodes)} nodes"
    )
    return phi1, phi2


def wronskian(
    phi1: VariationSolution, phi2: VariationSolution
) -> Tuple[np.ndarray, np.ndarray]:
    """Normalized determinant of [(phi1, phi1'), (phi2, phi2')] on phi2's nodes.

    The determinant is divided by |phi1 phi2'| + |phi1' phi2| so that values
    of order one mean strong independence.
    """
    lo, hi = phi1.trajectory.span
    nodes = phi2.nodes[(phi2.nodes >= lo) & (phi2.nodes <= hi)]
    u1 = phi1.trajectory.interpolate(nodes)
    u2 = phi2.trajectory.interpolate(nodes)
    det = u1[:, 0] * u2[:, 1] - u1[:, 1] * u2[:, 0]
    norm = np.abs(u1[:, 0] * u2[:, 1]) + np.abs(u1[:, 1] * u2[:, 0])
    return nodes, det / np.where(norm > 0, norm, 1.0)


def _launch_stays_positive(
    field: VectorField, r: float, rho_max: float, tol: float
) -> bool:
    """Launch (0, 1) at r; inconclusive (False) when no tail window fits."""
    window = _limit_window(r, rho_max)
    if window[0] >= rho_max:
        return False
    traj = integrate_adaptive(field, [0.0, 1.0], (r, rho_max), tol)
    if np.any(traj.states[1:, 0] <= 0):
        return False
    try:
        limit, _ = tail_extrapolate(traj, window, order=2)
    except BadFit:
        # positive on every node, judge by the last one
        limit = float(traj.states[-1, 0])
    return limit > 0


def estimate_r0(
    potential: Potential,
    d: int,
    probes: int = 20,
    candidates: Optional[Sequence[float]] = None,
    rho_max: float = 30.0,
    tol: float = 1e-8,
) -> float:
    """Smallest candidate R such that launches (0, 1) at R..2R never vanish again.

    Each candidate is tested with `probes` launch radii spread over [R, 2R];
    every probe must stay positive up to rho_max and have a positive limit.
    Returns inf when no candidate passes.
    """
    if candidates is None:
        candidates = np.geomspace(0.25, min(10.0, rho_max / 4), 16)
    field = linear_field(potential, d)
    for R in candidates:
        launches = np.linspace(R, 2 * R, probes)
        ok = parallel_map(
            lambda r: _launch_stays_positive(field, r, rho_max, tol), launches
        )
        if all(ok):
            logger.debug(f"R0 for {potential.name}: {R:.4g}")
            return float(R)
    logger.warning(f"no crossing radius found for {potential.name}")
    return math.inf
