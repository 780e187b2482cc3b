"""Radial heat flow of corotational maps into the sphere.

Physical runs evolve

    h_t = h_rr + (d-1)/r h_r - (d-1) sin(2h) / (2 r^2)

and self-similar runs evolve v(s, rho) = h(e^s, rho e^{s/2}),

    v_s = v_rhorho + ((d-1)/rho + rho/2) v_rho - (d-1) sin(2v) / (2 rho^2).

Both share a finite-volume discretization of the divergence-form Laplacian on
a radial grid and a theta-scheme written in increment form, with Newton sweeps
on the reaction term and tridiagonal solves through scipy.linalg.solve_banded.
"""

import logging
import math
from dataclasses import replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.linalg import LinAlgError, solve_banded

from .models import (
    CFLViolation,
    ConfigError,
    CriticalParams,
    LinearSolveFailure,
    OriginBC,
    Pole,
    Profile,
    RadialField,
    RadialGrid,
    RangeError,
    Run,
    SimConfig,
)
from .profile_solver import (
    EQUATOR,
    cached_profile,
    critical_params,
    kappa_threshold,
    shoot_for_limit,
    solve_w,
    south_profile,
)
from .utils import parallel_map, smooth_step

logger = logging.getLogger("expanderlab")

HALF_PI = 0.5 * math.pi
SELFSIM_DRIFT = 0.5
SELFSIM_RHO_DOM = 40.0
PECLET_LIMIT = 1.0


def half_sine(h) -> Tuple[np.ndarray, np.ndarray]:
    """sin(2h)/2 and cos(2h), evaluated after reducing h by the nearest k*pi/2.

    Near h = 0 the first value is h * sin(2h)/(2h), so the reaction stays exact
    at the stationary values 0, pi/2 and pi.
    """
    h = np.asarray(h, dtype=float)
    k = np.rint(h / HALF_PI)
    x = h - k * HALF_PI
    sign = np.where(np.mod(k, 2) == 0, 1.0, -1.0)
    return sign * x * np.sinc(2 * x / math.pi), sign * np.cos(2 * x)


def origin_bc_for(pole: Pole) -> OriginBC:
    if Pole(pole) is Pole.SOUTH:
        return OriginBC.DIRICHLET_PI
    return OriginBC.DIRICHLET_ZERO


class RadialOperator:
    """Tridiagonal finite-volume form of (r^{d-1} h_r)_r / r^{d-1} + b r h_r.

    Row 0 is left empty for the origin condition. Node i owns the shell
    between the midpoints of its neighbouring intervals; the last node owns a
    half cell closed by a zero-flux face at r_M. With a drift b > 0 the
    first-order term is centred where the cell Peclet number is at most
    PECLET_LIMIT and taken from the outer neighbour elsewhere.
    """

    def __init__(self, grid: RadialGrid, d: int, drift: float = 0.0):
        r = grid.nodes
        n = len(r)
        dr = np.diff(r)
        faces = 0.5 * (r[1:] + r[:-1])
        right = np.append(faces, r[-1])
        left = np.concatenate(([0.0], faces))
        self.grid = grid
        self.d = d
        self.drift = drift
        self.volume = (right**d - left**d) / d
        self.volume[0] = 1.0
        self.conductance = faces ** (d - 1) / dr

        self.lower = np.zeros(n)
        self.upper = np.zeros(n)
        self.lower[1:] = self.conductance / self.volume[1:]
        self.upper[1:-1] = self.conductance[1:] / self.volume[1:-1]
        self.diag = -(self.lower + self.upper)

        # first-order drift on interior rows
        self.drift_lower = np.zeros(n)
        self.drift_diag = np.zeros(n)
        self.drift_upper = np.zeros(n)
        if drift:
            b = drift * r[1:-1]
            width = np.maximum(dr[:-1], dr[1:])
            centred = 0.5 * b * width <= PECLET_LIMIT
            span = r[2:] - r[:-2]
            self.drift_upper[1:-1] = np.where(centred, b / span, b / dr[1:])
            self.drift_lower[1:-1] = np.where(centred, -b / span, 0.0)
            self.drift_diag[1:-1] = -(self.drift_upper[1:-1] + self.drift_lower[1:-1])
            upwinded = int(np.count_nonzero(~centred))
            if upwinded:
                logger.debug(f"Drift upwinded on {upwinded} of {n - 2} rows")

        self.lower += self.drift_lower
        self.upper += self.drift_upper
        self.diag += self.drift_diag

    def apply(self, h: np.ndarray) -> np.ndarray:
        """Operator applied to h, built from differences so constants map to 0."""
        flux = self.conductance * np.diff(h)
        out = np.zeros_like(h)
        out[1:-1] = (flux[1:] - flux[:-1]) / self.volume[1:-1]
        out[-1] = -flux[-1] / self.volume[-1]
        if self.drift:
            out[1:-1] += self.drift_upper[1:-1] * (h[2:] - h[1:-1])
            out[1:-1] += self.drift_lower[1:-1] * (h[:-2] - h[1:-1])
        return out


class Reaction:
    """The term (d-1)/r^2 * sin(2h)/2 in one of three forms.

    "full" acts on h itself. With a reference profile psi on the grid,
    "perturbation" acts on u = h - psi and "linearized" keeps only the
    potential (d-1) cos(2 psi)/r^2 u.
    """

    def __init__(
        self,
        grid: RadialGrid,
        d: int,
        mode: str = "full",
        reference: Optional[np.ndarray] = None,
    ):
        r = grid.nodes
        self.coef = np.zeros_like(r)
        self.coef[1:] = (d - 1) / r[1:] ** 2
        self.mode = mode
        if mode != "full" and reference is None:
            raise ConfigError(f"reaction mode {mode!r} needs a reference profile")
        if mode not in ("full", "perturbation", "linearized"):
            raise ConfigError(f"unknown reaction mode {mode!r}")
        self.reference = None if reference is None else np.asarray(reference, float)
        if self.reference is not None:
            self.base_sine, self.base_cos = half_sine(self.reference)

    def value(self, h: np.ndarray) -> np.ndarray:
        if self.mode == "full":
            return self.coef * half_sine(h)[0]
        if self.mode == "linearized":
            return self.coef * self.base_cos * h
        return self.coef * (half_sine(self.reference + h)[0] - self.base_sine)

    def derivative(self, h: np.ndarray) -> np.ndarray:
        if self.mode == "full":
            return self.coef * half_sine(h)[1]
        if self.mode == "linearized":
            return self.coef * self.base_cos
        return self.coef * half_sine(self.reference + h)[1]


def _solve_tridiagonal(ab: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    try:
        x = solve_banded((1, 1), ab, rhs, check_finite=False)
    except (LinAlgError, ValueError) as e:
        raise LinearSolveFailure(f"tridiagonal solve failed: {e}") from e
    if not np.all(np.isfinite(x)):
        raise LinearSolveFailure("tridiagonal solve returned non-finite values")
    return x


class RadialStepper:
    """Advances RadialFields on one grid with a fixed operator and reaction.

    Each implicit step solves

        (I - theta dt J) delta = -G(g),  G(g) = g - h - dt (theta F(g) + (1-theta) F(h))

    with F = A h - N(h) and J = A - diag N'(g), starting from g = h. On the
    first sweep the right-hand side is dt F(h), so stationary states are
    reproduced exactly.
    """

    def __init__(
        self,
        grid: RadialGrid,
        config: SimConfig,
        *,
        drift: float = 0.0,
        reference: Optional[np.ndarray] = None,
        outer_value: Optional[Callable[[float], float]] = None,
        mode: Optional[str] = None,
    ):
        if config.outer_bc == "dirichlet" and outer_value is None:
            raise ConfigError("outer_bc='dirichlet' needs an outer_value function")
        if mode is None:
            if config.nonlinearity == "linearized_Valpha":
                mode = "linearized"
            else:
                mode = "full" if reference is None else "perturbation"
        self.grid = grid
        self.config = config
        self.operator = RadialOperator(grid, config.d, drift)
        self.reaction = Reaction(grid, config.d, mode, reference)
        self.outer_value = outer_value
        self.last_residual = 0.0

    def rhs(self, h: np.ndarray) -> np.ndarray:
        out = self.operator.apply(h) - self.reaction.value(h)
        out[0] = 0.0
        return out

    def stability_limit(self, h: np.ndarray) -> float:
        rate = np.abs(self.operator.diag) + np.abs(self.reaction.derivative(h))
        return 2.0 / float(np.max(rate[1:]))

    def advance(self, field: RadialField, dt: float, theta: float) -> RadialField:
        if self.config.stepper == "explicit":
            return self._advance_explicit(field, dt)
        h = field.values
        t_new = field.time + dt
        op = self.operator
        f_old = self.rhs(h)
        g = h.copy()
        for sweep in range(self.config.newton_sweeps):
            f_new = f_old if sweep == 0 else self.rhs(g)
            residual = g - h - dt * (theta * f_new + (1.0 - theta) * f_old)
            jac_diag = op.diag - self.reaction.derivative(g)

            ab = np.zeros((3, len(h)))
            ab[0, 1:] = -theta * dt * op.upper[:-1]
            ab[1] = 1.0 - theta * dt * jac_diag
            ab[2, :-1] = -theta * dt * op.lower[1:]
            rhs = -residual
            self._origin_row(ab, rhs, g, field.origin_bc)
            if self.config.outer_bc == "dirichlet":
                ab[1, -1] = 1.0
                ab[2, -2] = 0.0
                rhs[-1] = self.outer_value(t_new) - g[-1]

            delta = _solve_tridiagonal(ab, rhs)
            g = g + delta
            self.last_residual = float(np.max(np.abs(delta)))
        return field.with_values(t_new, g)

    @staticmethod
    def _origin_row(ab, rhs, g, origin_bc: OriginBC) -> None:
        ab[1, 0] = 1.0
        ab[0, 1] = 0.0
        target = origin_bc.origin_value
        if target is None:
            # one-sided: h_0 follows h_1
            ab[0, 1] = -1.0
            rhs[0] = -(g[0] - g[1])
        else:
            rhs[0] = target - g[0]

    def _advance_explicit(self, field: RadialField, dt: float) -> RadialField:
        h = field.values
        limit = self.stability_limit(h)
        if dt > limit:
            raise CFLViolation(f"dt={dt:.3e} exceeds the explicit limit {limit:.3e}")
        t_new = field.time + dt
        g = h + dt * self.rhs(h)
        target = field.origin_bc.origin_value
        g[0] = g[1] if target is None else target
        if self.config.outer_bc == "dirichlet":
            g[-1] = self.outer_value(t_new)
        self.last_residual = 0.0
        return field.with_values(t_new, g)


def step(
    state: RadialField,
    config: SimConfig,
    dt: Optional[float] = None,
    *,
    theta: Optional[float] = None,
    outer_value: Optional[Callable[[float], float]] = None,
) -> RadialField:
    """Advance a physical-variable field by one step of size dt (config default)."""
    stepper = RadialStepper(state.grid, config, outer_value=outer_value)
    dt = config.step_size(state.time) if dt is None else dt
    return stepper.advance(state, dt, config.theta if theta is None else theta)


def _diagnostics(field: RadialField, stepper: RadialStepper, steps: int) -> Dict:
    h, r = field.values, field.r
    h_r = np.gradient(h, r)
    return {
        "time": field.time,
        "sup_norm": float(np.max(np.abs(h))),
        "grad_monitor": float(np.max(r * np.abs(h_r))),
        "newton_residual": stepper.last_residual,
        "steps": steps,
    }


def evolve(
    initial: RadialField,
    config: SimConfig,
    *,
    outer_value: Optional[Callable[[float], float]] = None,
    drift: float = 0.0,
    reference: Optional[np.ndarray] = None,
    label: str = "run",
    profile: Optional[Profile] = None,
) -> Run:
    """Step initial across config.t_span and keep snapshots with diagnostics.

    Snapshots are taken every config.snapshot_every steps, or exactly at
    config.snapshot_times when those are given (steps are shortened to land on
    them); the initial and final states are always kept.

    Raises:
        ConfigError: initial.time differs from the start of t_span, or a
            proportional step is requested from t <= 0.
    """
    t0, t_end = config.t_span
    if abs(initial.time - t0) > 1e-12 * max(1.0, abs(t0)):
        raise ConfigError(f"initial time {initial.time} differs from t_span[0]={t0}")
    if config.dt_mode == "proportional" and t0 <= 0:
        raise ConfigError("proportional time steps need t_span[0] > 0")

    stepper = RadialStepper(
        initial.grid,
        config,
        drift=drift,
        reference=reference,
        outer_value=outer_value,
    )
    eps = 1e-12 * max(1.0, abs(t_end))
    targets = sorted(t for t in (config.snapshot_times or ()) if t0 < t <= t_end)
    snapshots = [initial]
    diagnostics = [_diagnostics(initial, stepper, 0)]
    state, steps = initial, 0
    while t_end - state.time > eps:
        dt = min(config.step_size(state.time), t_end - state.time)
        if targets:
            dt = min(dt, targets[0] - state.time)
        theta = 1.0 if steps < config.startup_steps else config.theta
        state = stepper.advance(state, dt, theta)
        steps += 1

        hit = False
        while targets and targets[0] - state.time <= eps:
            targets.pop(0)
            hit = True
        final = t_end - state.time <= eps
        periodic = not config.snapshot_times and steps % config.snapshot_every == 0
        if hit or final or periodic:
            snapshots.append(state)
            diagnostics.append(_diagnostics(state, stepper, steps))

    logger.debug(
        f"{label}: {steps} steps over [{t0:.4g}, {t_end:.4g}], "
        f"{len(snapshots)} snapshots, last Newton update {stepper.last_residual:.2e}"
    )
    return Run(
        tuple(snapshots), tuple(diagnostics), config, label=label, profile=profile
    )


def expander_snapshot(profile: Profile, grid: RadialGrid, t: float) -> RadialField:
    """The field psi(r / sqrt(t)) at time t."""
    values, _ = profile.evaluate(grid.nodes / math.sqrt(t))
    bc = origin_bc_for(profile.params.pole)
    values[0] = bc.origin_value
    return RadialField(t, grid, values, bc)


def tracking_error(run: Run, profile: Profile) -> np.ndarray:
    """max_r |h(t, r) - psi(r / sqrt(t))| per snapshot (t > 0)."""
    errors = []
    for snap in run.snapshots:
        if snap.time <= 0:
            errors.append(math.nan)
            continue
        psi, _ = profile.evaluate(snap.r / math.sqrt(snap.time))
        errors.append(float(np.max(np.abs(snap.values - psi))))
    return np.array(errors)


def _track(profile: Profile, grid: RadialGrid, config: SimConfig) -> Run:
    r_dom = grid.r_dom

    def outer(t: float) -> float:
        return float(profile.evaluate(r_dom / math.sqrt(t))[0])

    config = replace(config, outer_bc="dirichlet")
    initial = expander_snapshot(profile, grid, config.t_span[0])
    return evolve(initial, config, outer_value=outer, label="expander", profile=profile)


def resolution_gap(coarse: Run, fine: Run) -> float:
    """Largest difference between two runs at shared snapshot times.

    The fine run is interpolated onto the coarse nodes with a cubic spline.
    """
    fine_times = fine.times
    gap = 0.0
    for snap in coarse.snapshots[1:]:
        match = np.flatnonzero(np.isclose(fine_times, snap.time, rtol=1e-10))
        if len(match) == 0:
            continue
        other = fine.snapshots[int(match[0])]
        spline = CubicSpline(other.r, other.values)
        gap = max(gap, float(np.max(np.abs(snap.values - spline(snap.r)))))
    return gap


def tracking_study(
    profile: Profile, grid: RadialGrid, config: SimConfig
) -> Dict[str, float]:
    """Run an exact expander snapshot at two resolutions and compare errors.

    The second run halves the grid spacing and the time step. The exact
    solution is imposed at the outer boundary.

    Returns:
        tracking_error, tracking_error_fine, discretization_error (largest
        difference between the two resolutions) and their error ratio.
    """
    t0, t1 = config.t_span
    if config.snapshot_times is None:
        times = tuple(float(t) for t in np.geomspace(t0, t1, 6)[1:])
        config = replace(config, snapshot_times=times)
    fine_config = replace(config, dt=0.5 * config.dt)
    coarse, fine = parallel_map(
        lambda job: _track(profile, job[0], job[1]),
        [(grid, config), (grid.refined(), fine_config)],
    )
    e_coarse = float(np.nanmax(tracking_error(coarse, profile)))
    e_fine = float(np.nanmax(tracking_error(fine, profile)))
    study = {
        "tracking_error": e_coarse,
        "tracking_error_fine": e_fine,
        "discretization_error": resolution_gap(coarse, fine),
        "error_ratio": e_fine / e_coarse if e_coarse > 0 else 0.0,
    }
    logger.debug(f"tracking study: {study}")
    return study


def cutoff_chi(r) -> np.ndarray:
    """Smooth cutoff: 0 on [0, 1/2], 1 on [1, inf)."""
    return smooth_step((np.asarray(r, dtype=float) - 0.5) / 0.5)[0]


def branch_profile(
    d: int,
    ell: float,
    branch: Union[Pole, str],
    *,
    tol: float = 1e-8,
    rho_max: float = 30.0,
    critical: Optional[CriticalParams] = None,
) -> Profile:
    """Expander with limit ell on the North or South branch.

    Raises:
        RangeError: ell outside the branch's admissible range; South needs
            3 <= d <= 6 and pi/2 - delta* <= ell < pi/2.
    """
    branch = Pole(branch)
    if branch is Pole.NORTH:
        top_ok = ell <= EQUATOR if d <= 6 else ell < EQUATOR
        if not (0 <= ell and top_ok):
            raise RangeError(f"North data needs ell in [0, pi/2] for d={d}, got {ell}")
        if ell == 0:
            return cached_profile(d, 0.0, rho_max)
        shot = shoot_for_limit(d, ell, branch=0, tol=tol, rho_max=rho_max)
        return cached_profile(d, shot.alpha, rho_max, min(1e-10, 0.01 * tol))

    crit = critical or critical_params(d, tol=tol, rho_max=rho_max)
    if not crit.finite:
        raise RangeError(f"no South expanders with small limits for d={d}")
    if not EQUATOR - crit.delta_star <= ell < EQUATOR:
        raise RangeError(
            f"South data needs ell in [{EQUATOR - crit.delta_star:.6f}, pi/2), "
            f"got {ell}"
        )
    return south_profile(d, ell, tol=tol, rho_max=rho_max)


def make_branch_data(
    d: int,
    ell: float,
    branch: Union[Pole, str],
    h0: Callable[[np.ndarray], np.ndarray],
    delta: float,
    grid: RadialGrid,
    *,
    profile: Optional[Profile] = None,
    tol: float = 1e-8,
    rho_max: float = 30.0,
    critical: Optional[CriticalParams] = None,
) -> RadialField:
    """Initial field at t = delta: psi_branch(r / sqrt(delta)) + (h0(r) - ell) chi(r).

    Example:
        ```python
        grid = RadialGrid.graded(3.0)
        field = make_branch_data(3, 1.0, "north", lambda r: 1.0 + 0 * r, 1e-3, grid)
        ```
    """
    if delta <= 0:
        raise RangeError(f"delta must be positive, got {delta}")
    branch = Pole(branch)
    if profile is None:
        profile = branch_profile(
            d, ell, branch, tol=tol, rho_max=rho_max, critical=critical
        )
    r = grid.nodes
    psi, _ = profile.evaluate(r / math.sqrt(delta))
    values = psi + (np.asarray(h0(r), dtype=float) - ell) * cutoff_chi(r)
    bc = origin_bc_for(branch)
    values[0] = bc.origin_value
    return RadialField(delta, grid, values, bc)


def closeness_zeta(run: Run, profile: Profile, eps: float) -> float:
    """Largest zeta with |h - psi(r/sqrt(t))| < eps at every simulated t + r < zeta.

    When no simulated point violates the bound, the extent of the run
    (final time plus r_dom) is returned.
    """
    zeta = run.times.max() + run.grid.r_dom
    for snap in run.snapshots:
        if snap.time <= 0:
            continue
        psi, _ = profile.evaluate(snap.r / math.sqrt(snap.time))
        bad = np.abs(snap.values - psi) >= eps
        if np.any(bad):
            zeta = min(zeta, snap.time + float(snap.r[bad].min()))
    return float(zeta)


def branch_separation(first: Run, second: Run) -> float:
    """min over shared snapshots of max_r |h_1 - h_2|."""
    gaps = [
        float(np.max(np.abs(a.values - b.values)))
        for a, b in zip(first.snapshots, second.snapshots)
        if math.isclose(a.time, b.time, rel_tol=1e-10)
    ]
    return min(gaps) if gaps else math.nan


def nonuniqueness_pair(
    d: int,
    ell: float,
    h0: Callable[[np.ndarray], np.ndarray],
    config: SimConfig,
    grid: RadialGrid,
    *,
    eps: float = 0.1,
    tol: float = 1e-8,
    critical: Optional[CriticalParams] = None,
) -> Tuple[Run, Run]:
    """Evolve North and South branch data built from the same h0.

    Both runs launch at t = config.delta_start. Each run's summary holds the
    closeness radius zeta for eps and the branch separation.

    Raises:
        RangeError: d outside 3..6 or ell outside [pi/2 - delta*, pi/2).
    """
    if not 3 <= d <= 6:
        raise RangeError(f"non-uniqueness needs 3 <= d <= 6, got {d}")
    crit = critical or critical_params(d, tol=tol)
    delta = config.delta_start
    if config.t_span[1] <= delta:
        raise ConfigError("t_span must end after delta_start")
    run_config = replace(config, d=d, t_span=(delta, config.t_span[1]))

    def run_branch(branch: Pole) -> Run:
        profile = branch_profile(d, ell, branch, tol=tol, critical=crit)
        initial = make_branch_data(d, ell, branch, h0, delta, grid, profile=profile)
        return evolve(initial, run_config, label=branch.value, profile=profile)

    north, south = parallel_map(run_branch, [Pole.NORTH, Pole.SOUTH])
    separation = branch_separation(north, south)
    for run in (north, south):
        run.summary["eps"] = eps
        run.summary["zeta"] = closeness_zeta(run, run.profile, eps)
        run.summary["separation"] = separation
    logger.debug(
        f"pair d={d} ell={ell}: separation {separation:.4f}, "
        f"zeta {north.summary['zeta']:.4g} / {south.summary['zeta']:.4g}"
    )
    return north, south


def evolve_selfsimilar(
    initial: Union[RadialField, Callable[[np.ndarray], np.ndarray]],
    s_span: Tuple[float, float],
    profile: Profile,
    *,
    grid: Optional[RadialGrid] = None,
    ds: float = 0.01,
    theta: float = 0.5,
    form: str = "perturbation",
    nonlinearity: str = "full_sine",
    kappa: Optional[float] = None,
    snapshot_every: int = 10,
) -> Run:
    """Evolve v(s, rho) around psi_alpha and record its decay.

    initial is either a callable rho -> v0(rho), in which case the outer edge
    receives the inflow value transported along characteristics,
    v(s, rho_dom) = psi(rho_dom) + (v0 - psi)(rho_dom e^{(s - s0)/2}), or a
    RadialField holding v0 on the grid, closed by zero flux.

    form="perturbation" evolves u = v - psi_alpha, for which u = 0 is an exact
    discrete steady state; form="full" evolves v itself. Every diagnostic
    dict gains sup_dev = ||v - psi||_inf and weighted = ||(v - psi)/w||_inf
    with w = solve_w(profile, kappa) (NaN for South profiles). kappa defaults
    to half the lower end of the positivity bracket of w.
    """
    if form not in ("perturbation", "full"):
        raise ConfigError(f"unknown self-similar form {form!r}")
    if form == "full" and nonlinearity != "full_sine":
        raise ConfigError("the linearized reaction needs the perturbation form")
    if isinstance(initial, RadialField):
        grid = initial.grid
    elif grid is None:
        grid = RadialGrid.graded(SELFSIM_RHO_DOM, r1=1e-3, ratio=1.05, dr_max=0.05)
    rho = grid.nodes
    psi, _ = profile.evaluate(rho)
    bc = origin_bc_for(profile.params.pole)
    psi[0] = bc.origin_value
    s0 = s_span[0]

    if isinstance(initial, RadialField):
        v0 = initial.values
        outer_value = None
    else:
        v0 = np.asarray(initial(rho), dtype=float)
        rho_dom, psi_dom = grid.r_dom, float(psi[-1])

        def outer_value(s: float) -> float:
            far = rho_dom * math.exp(0.5 * (s - s0))
            gap = float(initial(np.array([far]))[0] - profile.evaluate(far)[0])
            return gap if form == "perturbation" else psi_dom + gap

    config = SimConfig(
        d=profile.d,
        dt=ds,
        theta=theta,
        t_span=s_span,
        nonlinearity=nonlinearity,
        snapshot_every=snapshot_every,
        outer_bc="zero_flux" if outer_value is None else "dirichlet",
    )
    if form == "perturbation":
        u0 = v0 - psi
        u0[0] = 0.0
        start = RadialField(s0, grid, u0, OriginBC.DIRICHLET_ZERO)
        reference = psi
    else:
        values = v0.copy()
        values[0] = bc.origin_value
        start = RadialField(s0, grid, values, bc)
        reference = None
    run = evolve(
        start,
        config,
        outer_value=outer_value,
        drift=SELFSIM_DRIFT,
        reference=reference,
        label=f"selfsim_{form}",
        profile=profile,
    )

    weight = None
    if profile.params.pole is Pole.NORTH:
        if kappa is None:
            kappa = 0.5 * kappa_threshold(profile)[0]
        weight = solve_w(profile, kappa).evaluate(rho[1:])
    diagnostics = []
    for snap, diag in zip(run.snapshots, run.diagnostics):
        deviation = snap.values if form == "perturbation" else snap.values - psi
        weighted = math.nan
        if weight is not None:
            weighted = float(np.max(np.abs(deviation[1:] / weight)))
        diagnostics.append(
            {
                **diag,
                "sup_dev": float(np.max(np.abs(deviation))),
                "weighted": weighted,
            }
        )
    summary = {**run.summary, "kappa": math.nan if weight is None else kappa}
    return replace(run, diagnostics=tuple(diagnostics), summary=summary)


def decay_rate(
    run: Run, window: Optional[Tuple[float, float]] = None
) -> Tuple[float, float]:
    """Fitted rate lambda of sup_dev ~ C e^{-lambda s} and the fit's RMS residual.

    The default window is the second half of the run.
    """
    s = run.times
    dev = np.array([diag["sup_dev"] for diag in run.diagnostics])
    if window is None:
        window = (0.5 * (s[0] + s[-1]), s[-1])
    mask = (s >= window[0]) & (s <= window[1]) & (dev > 0)
    if np.count_nonzero(mask) < 3:
        raise RangeError(f"too few snapshots with s in {window} for a decay fit")
    coeffs, residuals, *_ = np.polyfit(s[mask], np.log(dev[mask]), 1, full=True)
    rms = math.sqrt(residuals[0] / np.count_nonzero(mask)) if len(residuals) else 0.0
    return -float(coeffs[0]), rms


def weighted_growth(run: Run) -> float:
    """sup_s ||v(s) - psi||_{L^inf[w]} / ||v(0) - psi||_{L^inf[w]}."""
    weighted = np.array([diag["weighted"] for diag in run.diagnostics])
    if weighted[0] == 0:
        return 0.0
    return float(np.max(weighted) / weighted[0])


def run_resolutions(
    jobs: Sequence[Tuple[RadialField, SimConfig]], **kwargs
) -> List[Run]:
    """Evolve independent (initial, config) pairs concurrently, in input order."""
    return parallel_map(lambda job: evolve(job[0], job[1], **kwargs), jobs)
