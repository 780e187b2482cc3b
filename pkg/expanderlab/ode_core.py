"""Adaptive ODE integration on the half-line and series launch at the origin.

The expander equation

    psi'' + ((d-1)/rho + rho/2) psi' - (d-1) sin(2 psi) / (2 rho^2) = 0

has a regular-singular point at rho = 0. Solutions are started from a truncated
power series at a small radius rho0 and continued with an embedded Runge-Kutta
pair (scipy's RK45 by default) under mixed absolute/relative error control.
"""

import logging
import math
from dataclasses import replace
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import solve_ivp

from .models import (
    IntegrationFailure,
    NonFiniteState,
    Pole,
    RangeError,
    SeriesLaunch,
    StepUnderflow,
    Trajectory,
    VectorField,
)

logger = logging.getLogger("expanderlab")

ATOL_FLOOR = 1e-14


def default_atol(tol: float) -> float:
    return max(ATOL_FLOOR, 1e-2 * tol)


def integrate_adaptive(
    field: VectorField,
    state0: Sequence[float],
    rho_span: Tuple[float, float],
    tol: float,
    *,
    method: str = "RK45",
    backward: bool = False,
    t_eval: Optional[np.ndarray] = None,
    atol: Optional[float] = None,
) -> Trajectory:
    """Integrate field from state0 across rho_span with step control at tol.

    With backward=True the integration starts at rho_span[1] with state0 and
    runs down to rho_span[0]; the returned trajectory still has increasing
    nodes.

    Args:
        field: The vector field.
        state0: Initial state.
        rho_span: (rho_a, rho_b) with 0 < rho_a < rho_b.
        tol: Relative tolerance; the absolute tolerance defaults to
            max(1e-14, 1e-2 * tol).
        method: "RK45" (Dormand-Prince 5(4)) or "DOP853".
        backward: Integrate from rho_b down to rho_a.
        t_eval: Optional output radii (must lie in the span).
        atol: Override of the absolute tolerance.

    Returns:
        Trajectory with field slopes attached for cubic Hermite dense output.

    Raises:
        StepUnderflow: The step size collapsed.
        NonFiniteState: A state became NaN or infinite.
        IntegrationFailure: Any other solver failure.
    """
    rho_a, rho_b = float(rho_span[0]), float(rho_span[1])
    if not (0 < rho_a < rho_b):
        raise RangeError(f"invalid span ({rho_a}, {rho_b})")
    if tol <= 0:
        raise RangeError(f"tol must be positive, got {tol}")

    y0 = np.asarray(state0, dtype=float)
    if not np.all(np.isfinite(y0)):
        raise NonFiniteState("initial state is not finite")
    span = (rho_b, rho_a) if backward else (rho_a, rho_b)
    if t_eval is not None:
        t_eval = np.asarray(t_eval, dtype=float)
        if backward:
            t_eval = t_eval[::-1]

    def rhs(rho, y):
        return field.eval(rho, y)

    sol = solve_ivp(
        rhs,
        span,
        y0,
        method=method,
        t_eval=t_eval,
        rtol=tol,
        atol=default_atol(tol) if atol is None else atol,
    )
    if sol.status < 0:
        message = str(sol.message)
        if "step size" in message.lower():
            raise StepUnderflow(f"step size underflow near rho={sol.t[-1]}: {message}")
        raise IntegrationFailure(message)

    nodes = np.asarray(sol.t, dtype=float)
    states = np.asarray(sol.y, dtype=float).T
    if not np.all(np.isfinite(states)):
        bad = nodes[~np.all(np.isfinite(states), axis=1)][0]
        raise NonFiniteState(f"state became non-finite at rho={bad}")
    if backward:
        nodes = nodes[::-1]
        states = states[::-1]

    slopes = np.array([field.eval(r, y) for r, y in zip(nodes, states)])
    logger.debug(
        f"{method} over [{rho_a:.3g}, {rho_b:.3g}] at tol={tol:.1e}: "
        f"{len(nodes)} nodes, {sol.nfev} evaluations"
    )
    return Trajectory(nodes, states, tol, slopes)


def step_defect(
    field: VectorField, trajectory: Trajectory, tol: float, stride: int = 10
) -> float:
    """Largest relative mismatch between consecutive nodes and a tol/100 re-integration.

    Every stride-th interval [rho_k, rho_k+1] is re-integrated from the stored
    state at rho_k; the result is compared with the stored state at rho_k+1.
    """
    worst = 0.0
    nodes, states = trajectory.nodes, trajectory.states
    for k in range(0, len(nodes) - 1, stride):
        sol = solve_ivp(
            lambda r, y: field.eval(r, y),
            (nodes[k], nodes[k + 1]),
            states[k],
            rtol=tol / 100,
            atol=default_atol(tol / 100),
        )
        if sol.status < 0:
            raise IntegrationFailure(str(sol.message))
        scale = max(1.0, float(np.max(np.abs(states[k + 1]))))
        gap = float(np.max(np.abs(sol.y[:, -1] - states[k + 1]))) / scale
        worst = max(worst, gap)
    return worst


def series_coefficients(d: int, alpha: float) -> Tuple[float, float]:
    """Cubic and quintic coefficients (a, b) of the North series."""
    a = -(alpha / 2 + (2.0 / 3.0) * (d - 1) * alpha**3) / (2 * d + 4)
    b = (
        -1.5 * a - 2 * (d - 1) * alpha**2 * a + (2.0 / 15.0) * (d - 1) * alpha**5
    ) / (4 * d + 16)
    return a, b


def series_launch(
    d: int, alpha: float, pole: Pole, rho0: float, order: int = 3
) -> SeriesLaunch:
    """Launch values of the expander profile at rho0 from its origin series.

    North: psi = alpha*rho + a*rho^3 (+ b*rho^5), a = -(alpha/2 +
    (2/3)(d-1)alpha^3)/(2d+4). South is pi minus the North series.

    Example:
        ```python
        launch = series_launch(3, 1.0, Pole.NORTH, 1e-3)
        launch.a  # -11/60
        ```
    """
    if not 0 < rho0 <= 0.1:
        raise RangeError(f"rho0 must lie in (0, 0.1], got {rho0}")
    if order not in (3, 5):
        raise RangeError(f"series order must be 3 or 5, got {order}")
    if not math.isfinite(alpha):
        raise RangeError("alpha must be finite")
    a, b = series_coefficients(d, alpha)
    launch = SeriesLaunch(
        d=d,
        alpha=alpha,
        pole=Pole(pole),
        rho0=rho0,
        order=order,
        a=a,
        b=b if order == 5 else 0.0,
        value=0.0,
        derivative=0.0,
        second_derivative=0.0,
    )
    value, first, second = launch.at(rho0)
    return replace(
        launch,
        value=float(value),
        derivative=float(first),
        second_derivative=float(second),
    )


def _x_minus_sin(x: float) -> float:
    if abs(x) < 0.5:
        # Taylor series through x^15
        x2 = x * x
        term, total = x * x2 / 6.0, 0.0
        for k in range(7):
            total += term
            term *= -x2 / ((2 * k + 4) * (2 * k + 5))
        return total
    return x - math.sin(x)


def series_residual(launch: SeriesLaunch) -> float:
    """Residual of the expander equation for the launch values at rho0.

    The singular terms are grouped as (d-1)(rho psi' - sin(2 psi)/2)/rho^2 and
    evaluated without cancellation. The South residual is minus the North one.
    """
    rho, d = launch.rho0, launch.d
    a, b, alpha = launch.a, launch.b, launch.alpha
    psi = alpha * rho + a * rho**3 + b * rho**5
    first = alpha + 3 * a * rho**2 + 5 * b * rho**4
    second = 6 * a * rho + 20 * b * rho**3
    # rho*psi' - psi, exactly from the series
    gap = 2 * a * rho**3 + 4 * b * rho**5
    singular = gap + 0.5 * _x_minus_sin(2 * psi)
    residual = second + 0.5 * rho * first + (d - 1) * singular / rho**2
    return -residual if launch.pole is Pole.SOUTH else residual


def expander_field(d: int) -> VectorField:
    """First-order form of the expander equation in the state (psi, psi')."""
    k = d - 1

    def rhs(rho: float, y: np.ndarray) -> np.ndarray:
        psi, dpsi = y[0], y[1]
        ddpsi = -(k / rho + 0.5 * rho) * dpsi + k * math.sin(2 * psi) / (2 * rho * rho)
        return np.array([dpsi, ddpsi])

    return VectorField(2, rhs)


def monotone_quantity(trajectory: Trajectory, d: int) -> np.ndarray:
    """H(rho) = rho^2 psi'^2 - (d-1) sin^2 psi at every node."""
    rho = trajectory.nodes
    psi, dpsi = trajectory.states[:, 0], trajectory.states[:, 1]
    return rho**2 * dpsi**2 - (d - 1) * np.sin(psi) ** 2


def h_monotone_violation(trajectory: Trajectory, d: int) -> float:
    """Largest increase of H between consecutive nodes, relative to max(1, max|H|).

    H is nonincreasing along exact solutions, so this is a pure error measure.
    """
    H = monotone_quantity(trajectory, d)
    increase = float(np.max(np.diff(H), initial=0.0))
    return max(0.0, increase) / max(1.0, float(np.max(np.abs(H))))
