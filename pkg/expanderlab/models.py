"""Data models for expanderlab.

This module defines the core data structures shared by the solvers: ODE
trajectories and series launches, expander profiles and their companion linear
solutions, radial PDE states and run configuration, together with the exception
hierarchy used for error handling throughout the library.
"""

import math
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np
from scipy.interpolate import CubicHermiteSpline, CubicSpline

SCHEMA_VERSION = 1


class ExpanderLabError(Exception):
    """Base exception for all expanderlab errors.

    This is the parent class for every error raised by the library. It can be
    used to catch any numerical or configuration failure regardless of type.

    Example:
        ```python
        try:
            profile = solve_profile(ProfileParams(d=3, alpha=1.0))
        except ExpanderLabError as e:
            print(f"Profile solve failed: {e}")
        ```
    """

    pass


class IntegrationFailure(ExpanderLabError):
    """Exception raised when an ODE integration cannot be completed.

    Example:
        ```python
        try:
            traj = integrate_adaptive(field, y0, (1e-4, 30.0), tol=1e-10)
        except IntegrationFailure as e:
            print(f"Integration failed: {e}")
        ```
    """

    pass


class StepUnderflow(IntegrationFailure):
    """Exception raised when the adaptive step shrinks below a feasible size.

    This usually signals a singularity or stiffness inside the requested span.
    """

    pass


class NonFiniteState(IntegrationFailure):
    """Exception raised when an integrated state becomes NaN or infinite."""

    pass


class NoBracket(ExpanderLabError):
    """Exception raised when no sign-change bracket exists for a root search.

    For shooting this means the requested limit is outside the range attained
    by the requested branch.

    Example:
        ```python
        try:
            shot = shoot_for_limit(7, math.pi / 2, branch=0)
        except NoBracket:
            print("pi/2 is not attained by sub-equator profiles for d >= 7")
        ```
    """

    pass


class RangeError(ExpanderLabError, ValueError):
    """Exception raised when an argument lies outside its admissible range."""

    pass


class PositivityLost(ExpanderLabError):
    """Exception raised when a solution required to stay positive vanishes.

    Example:
        ```python
        try:
            w = solve_w(profile, kappa=5.0)
        except PositivityLost as e:
            print(f"kappa above the positivity threshold: {e}")
        ```
    """

    pass


class BadFit(ExpanderLabError):
    """Exception raised when a least-squares fit is rejected by its residual."""

    pass


class LinearSolveFailure(ExpanderLabError):
    """Exception raised when a banded linear solve fails or is non-finite."""

    pass


class CFLViolation(ExpanderLabError):
    """Exception raised when the explicit stepper is used beyond its stability limit."""

    pass


class NewtonDivergence(ExpanderLabError):
    """Exception raised when a Newton iteration fails to converge.

    Example:
        ```python
        try:
            state = gl_step(state, dt=10.0, d=5)
        except NewtonDivergence:
            print("time step too large for this epsilon")
        ```
    """

    pass


class UnresolvedRegion(ExpanderLabError):
    """Exception raised when a quadrature region is not resolved by the grid or run."""

    pass


class DomainViolation(ExpanderLabError):
    """Exception raised when a field leaves the value range a check requires."""

    pass


class ConfigError(ExpanderLabError, ValueError):
    """Exception raised for invalid or unknown configuration values."""

    pass


class MissingConstant(ConfigError):
    """A regression constant is absent from constants.json."""

    pass


class VerificationFailure(ExpanderLabError):
    """Exception raised when a verification suite reports a failed property.

    Example:
        ```python
        report = run_suite("comparison", config)
        if not report["passed"]:
            raise VerificationFailure(f"comparison violated by {report['violation']}")
        ```
    """

    pass


class Pole(str, Enum):
    """Boundary condition at the origin of an expander profile."""

    NORTH = "north"
    SOUTH = "south"


class VariationKind(str, Enum):
    """Which linear equation a VariationSolution solves."""

    PHI_ALPHA = "phi_alpha"
    UNDERLINE_PHI = "underline_phi"
    W = "w"
    Y = "y"
    V_UPPER = "v_upper"
    W_UPPER = "w_upper"
    PHI1 = "phi1"
    PHI2 = "phi2"


INVERSE_RHO_KINDS = frozenset(
    {VariationKind.Y, VariationKind.V_UPPER, VariationKind.W_UPPER}
)


class OriginBC(str, Enum):
    """Boundary condition imposed at r = 0 by the radial PDE solver."""

    DIRICHLET_ZERO = "dirichlet_zero"
    DIRICHLET_PI = "dirichlet_pi"
    FREE_SINGULAR = "free_singular"

    @property
    def origin_value(self) -> Optional[float]:
        if self is OriginBC.DIRICHLET_ZERO:
            return 0.0
        if self is OriginBC.DIRICHLET_PI:
            return math.pi
        return None


@dataclass(frozen=True)
class VectorField:
    """A first-order system y' = eval(rho, y) on rho > 0.

    Attributes:
        dimension: Size of the state vector.
        eval: Deterministic map (rho, state) -> derivative vector.
    """

    dimension: int
    eval: Callable[[float, np.ndarray], np.ndarray]

    def __call__(self, rho: float, state: np.ndarray) -> np.ndarray:
        return self.eval(rho, state)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Discrete solution of an ODE system with dense output.

    Nodes are strictly increasing and every state entry is finite. When the
    field slopes at the nodes are known, dense output uses cubic Hermite
    interpolation; otherwise a cubic spline through the node values.

    Attributes:
        nodes: Strictly increasing radii.
        states: Array of shape (len(nodes), dimension).
        tolerance_used: Tolerance the integrator was run with.
        slopes: Field evaluations at the nodes, same shape as states.
    """

    nodes: np.ndarray
    states: np.ndarray
    tolerance_used: float
    slopes: Optional[np.ndarray] = None

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        states = np.asarray(self.states, dtype=float)
        if states.ndim == 1:
            states = states[:, None]
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "states", states)
        if self.slopes is not None:
            slopes = np.asarray(self.slopes, dtype=float).reshape(states.shape)
            object.__setattr__(self, "slopes", slopes)
        if nodes.ndim != 1 or len(nodes) < 2:
            raise RangeError("a trajectory needs at least two nodes")
        if states.shape[0] != len(nodes):
            raise RangeError(
                f"states has {states.shape[0]} rows for {len(nodes)} nodes"
            )
        if np.any(np.diff(nodes) <= 0):
            raise RangeError("trajectory nodes must be strictly increasing")
        if not np.all(np.isfinite(states)):
            raise NonFiniteState("trajectory contains non-finite states")

    @property
    def dimension(self) -> int:
        return self.states.shape[1]

    @property
    def span(self) -> Tuple[float, float]:
        return float(self.nodes[0]), float(self.nodes[-1])

    def component(self, i: int) -> np.ndarray:
        return self.states[:, i]

    @cached_property
    def _spline(self):
        if self.slopes is not None:
            return CubicHermiteSpline(self.nodes, self.states, self.slopes, axis=0)
        return CubicSpline(self.nodes, self.states, axis=0)

    def interpolate(self, rho, nu: int = 0) -> np.ndarray:
        """Dense output at rho (scalar or array), or its nu-th derivative."""
        rho_arr = np.asarray(rho, dtype=float)
        lo, hi = self.span
        slack = 1e-12 * max(1.0, abs(hi))
        if np.any(rho_arr < lo - slack) or np.any(rho_arr > hi + slack):
            raise RangeError(f"interpolation outside trajectory span [{lo}, {hi}]")
        return self._spline(np.clip(rho_arr, lo, hi), nu)


@dataclass(frozen=True)
class SeriesLaunch:
    """Truncated power series of a profile at the regular-singular origin.

    North: psi = alpha*rho + a*rho^3 (+ b*rho^5 at order 5). South is pi minus
    the North series for the same alpha.

    Attributes:
        d: Dimension.
        alpha: Shooting slope.
        pole: Origin boundary condition.
        rho0: Launch radius.
        order: Truncation order, 3 or 5.
        a: Cubic coefficient.
        b: Quintic coefficient (0 at order 3).
        value: psi(rho0).
        derivative: psi'(rho0).
        second_derivative: psi''(rho0).
    """

    d: int
    alpha: float
    pole: Pole
    rho0: float
    order: int
    a: float
    b: float
    value: float
    derivative: float
    second_derivative: float

    def at(self, rho) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Series value and first two derivatives at rho."""
        rho = np.asarray(rho, dtype=float)
        b = self.b if self.order >= 5 else 0.0
        value = self.alpha * rho + self.a * rho**3 + b * rho**5
        first = self.alpha + 3 * self.a * rho**2 + 5 * b * rho**4
        second = 6 * self.a * rho + 20 * b * rho**3
        if self.pole is Pole.SOUTH:
            return math.pi - value, -first, -second
        return value, first, second


@dataclass(frozen=True)
class ProfileParams:
    """Parameters of a shooting solve for the expander equation.

    Attributes:
        d: Dimension (>= 3).
        alpha: Shooting slope psi'(0) >= 0.
        pole: Origin boundary condition.
        rho_max: Outer integration radius (>= 10).
        tol: Integrator tolerance in (0, 1e-6].
        rho0: Series launch radius in (0, 0.1].
        order: Series order; None selects 5 when alpha > 5, else 3.
    """

    d: int
    alpha: float
    pole: Pole = Pole.NORTH
    rho_max: float = 30.0
    tol: float = 1e-10
    rho0: float = 1e-4
    order: Optional[int] = None

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 3:
            raise RangeError(f"dimension must be an integer >= 3, got {self.d}")
        if not math.isfinite(self.alpha) or self.alpha < 0:
            raise RangeError(f"alpha must be finite and nonnegative, got {self.alpha}")
        if self.rho_max < 10:
            raise RangeError(f"rho_max must be >= 10, got {self.rho_max}")
        if not 0 < self.tol <= 1e-6:
            raise RangeError(f"tol must lie in (0, 1e-6], got {self.tol}")
        if not 0 < self.rho0 <= 0.1:
            raise RangeError(f"rho0 must lie in (0, 0.1], got {self.rho0}")
        if self.order not in (None, 3, 5):
            raise RangeError(f"series order must be 3 or 5, got {self.order}")

    @property
    def series_order(self) -> int:
        if self.order is not None:
            return self.order
        return 5 if self.alpha > 5 else 3


@dataclass(frozen=True, eq=False)
class Profile:
    """A solved expander trajectory psi_alpha with its limit and diagnostics.

    Attributes:
        params: The solve parameters.
        trajectory: Trajectory of (psi, psi') on [rho0, rho_max].
        psi_inf: Extrapolated limit psi(infinity).
        psi_inf_error: Error estimate of psi_inf.
        crossings_of_equator: Number of radii where psi = pi/2.
        crossing_radii: Polished crossing radii inside the trajectory.
        tail: Coefficients (L, c1, c2, ...) of L + sum c_k rho^(-2k).
        launch: Series used below rho0.
        psi_end: Raw value psi(rho_max).
    """

    params: ProfileParams
    trajectory: Trajectory
    psi_inf: float
    psi_inf_error: float
    crossings_of_equator: int
    crossing_radii: Tuple[float, ...]
    tail: Tuple[float, ...]
    launch: SeriesLaunch
    psi_end: float

    @property
    def d(self) -> int:
        return self.params.d

    @property
    def alpha(self) -> float:
        return self.params.alpha

    @property
    def nodes(self) -> np.ndarray:
        return self.trajectory.nodes

    @property
    def psi(self) -> np.ndarray:
        return self.trajectory.states[:, 0]

    @property
    def dpsi(self) -> np.ndarray:
        return self.trajectory.states[:, 1]

    def evaluate(self, rho) -> Tuple[np.ndarray, np.ndarray]:
        """(psi, psi') at any rho >= 0.

        Uses the series below rho0, dense output on the trajectory and the
        fitted tail model beyond rho_max.
        """
        rho = np.asarray(rho, dtype=float)
        scalar = rho.ndim == 0
        rho = np.atleast_1d(rho)
        if np.any(rho < 0):
            raise RangeError("profiles are defined for rho >= 0")
        lo, hi = self.trajectory.span
        psi = np.empty_like(rho)
        dpsi = np.empty_like(rho)

        inner = rho < lo
        if np.any(inner):
            value, first, _ = self.launch.at(rho[inner])
            psi[inner], dpsi[inner] = value, first

        outer = rho > hi
        if np.any(outer):
            x = rho[outer] ** -2
            coeffs = np.asarray(self.tail)
            powers = np.arange(len(coeffs))
            psi[outer] = np.polynomial.polynomial.polyval(x, coeffs)
            dx = np.polynomial.polynomial.polyval(x, (coeffs * powers)[1:])
            dpsi[outer] = -2.0 * rho[outer] ** -3 * dx

        middle = ~(inner | outer)
        if np.any(middle):
            states = self.trajectory.interpolate(rho[middle])
            psi[middle], dpsi[middle] = states[:, 0], states[:, 1]

        if scalar:
            return psi[0], dpsi[0]
        return psi, dpsi


@dataclass(frozen=True, eq=False)
class VariationSolution:
    """Solution of a linear second-order equation along a profile.

    Attributes:
        kind: Which equation was solved.
        base: Profile the equation is posed along (None for a bare potential).
        trajectory: Trajectory of (u, u').
        limit: Extrapolated u(infinity), or of rho*u for kind Y.
        parameter: kappa for kind W.
        positive: Whether u > 0 at every node after the launch.
        residual: Largest ODE residual measured along the solution.
    """

    kind: VariationKind
    base: Optional[Profile]
    trajectory: Trajectory
    limit: Optional[float] = None
    parameter: Optional[float] = None
    positive: Optional[bool] = None
    residual: Optional[float] = None

    @property
    def nodes(self) -> np.ndarray:
        return self.trajectory.nodes

    @property
    def values(self) -> np.ndarray:
        return self.trajectory.states[:, 0]

    @property
    def derivatives(self) -> np.ndarray:
        return self.trajectory.states[:, 1]

    def evaluate(self, rho) -> np.ndarray:
        """Value at rho, linear below the first node and tail-extended beyond the last.

        Kinds solving the y-equation decay like limit/rho; the others tend to
        their limit.
        """
        rho = np.asarray(rho, dtype=float)
        lo, hi = self.trajectory.span
        inside = np.clip(rho, lo, hi)
        out = np.asarray(self.trajectory.interpolate(inside)[..., 0], dtype=float)
        first = self.values[0] / lo
        out = np.where(rho < lo, first * rho, out)
        if self.limit is not None:
            if self.kind in INVERSE_RHO_KINDS:
                far = self.limit / np.maximum(rho, hi)
            else:
                far = self.limit
            out = np.where(rho > hi, far, out)
        return out


@dataclass(frozen=True)
class ShootResult:
    """Result of shooting for a prescribed limit on one branch.

    Attributes:
        alpha: Matched shooting slope.
        target_ell: Requested limit.
        branch: Requested number of equator crossings.
        bracket_history: Successive (alpha_lo, alpha_hi) brackets.
        iterations: Bisection and Brent iterations used.
        psi_inf: Limit attained by the returned alpha.
    """

    alpha: float
    target_ell: float
    branch: int
    bracket_history: Tuple[Tuple[float, float], ...]
    iterations: int
    psi_inf: float


@dataclass(frozen=True, eq=False)
class BranchScan:
    """Sampled graph of alpha -> psi_alpha(infinity) with crossing counts."""

    d: int
    alphas: np.ndarray
    limits: np.ndarray
    crossings: np.ndarray

    def __post_init__(self):
        alphas = np.asarray(self.alphas, dtype=float)
        limits = np.asarray(self.limits, dtype=float)
        crossings = np.asarray(self.crossings, dtype=int)
        if not len(alphas) == len(limits) == len(crossings):
            raise RangeError("scan lists must have the same length")
        if np.any(np.diff(alphas) <= 0):
            raise RangeError("scan alphas must be increasing")
        if np.any(limits < -1e-8) or np.any(limits > math.pi + 1e-8):
            raise DomainViolation("scan limits must lie in [0, pi]")
        object.__setattr__(self, "alphas", alphas)
        object.__setattr__(self, "limits", limits)
        object.__setattr__(self, "crossings", crossings)

    def equator_sign_changes(self) -> int:
        """Number of sign changes of limit - pi/2 along the scan."""
        sign = np.sign(self.limits - math.pi / 2)
        sign = sign[sign != 0]
        return int(np.count_nonzero(sign[1:] != sign[:-1]))


@dataclass(frozen=True)
class CriticalParams:
    """Critical shooting parameters; infinite sentinels for d >= 7.

    Attributes:
        alpha0: Smallest alpha whose profile reaches pi/2.
        alpha_star: Smallest alpha where phi_alpha loses positivity.
        ell_star: psi_{alpha_star}(infinity).
        delta_star: ell_star - pi/2.
        tol: Tolerance the values were computed at.
    """

    alpha0: float
    alpha_star: float
    ell_star: float
    delta_star: float
    tol: float = 0.0

    @property
    def finite(self) -> bool:
        return math.isfinite(self.alpha0)


@dataclass(frozen=True)
class Potential:
    """A potential V(rho) with a sampled bound |V| <= C0/rho^2, |V'| <= C0/rho^3.

    Attributes:
        eval: Vectorized map rho -> V(rho).
        bound_C0: Sampled bound constant.
        name: Label used in manifests.
        rho_range: Range the bound was sampled on.
    """

    eval: Callable[[np.ndarray], np.ndarray]
    bound_C0: float
    name: str = "V"
    rho_range: Tuple[float, float] = (10.0, 30.0)

    def __call__(self, rho):
        return self.eval(rho)


@dataclass(frozen=True)
class DecayFit:
    """Least-squares decay fit value ~ prefactor * rho^exponent."""

    exponent: float
    prefactor: float
    residual: float
    model: str = "power"


@dataclass(frozen=True, eq=False)
class RadialGrid:
    """Radial grid 0 = r_0 < r_1 < ... < r_M = r_dom.

    Graded grids grow geometrically from r_1 with the given ratio until the
    spacing reaches dr_max, then stay uniform.
    """

    nodes: np.ndarray
    spacing: str = "uniform"
    r1: Optional[float] = None
    ratio: Optional[float] = None
    dr_max: Optional[float] = None

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        object.__setattr__(self, "nodes", nodes)
        if len(nodes) < 3 or nodes[0] != 0.0:
            raise RangeError("a radial grid needs r_0 = 0 and at least three nodes")
        if np.any(np.diff(nodes) <= 0):
            raise RangeError("grid nodes must be strictly increasing")
        if self.spacing == "graded" and nodes[1] > 1e-3 * nodes[-1]:
            raise RangeError("graded grids need r_1 <= 1e-3 * r_dom")

    @classmethod
    def uniform(cls, r_dom: float, n: int) -> "RadialGrid":
        return cls(np.linspace(0.0, r_dom, n + 1), spacing="uniform")

    @classmethod
    def graded(
        cls, r_dom: float, r1: float = 1e-3, ratio: float = 1.05, dr_max: float = 0.02
    ) -> "RadialGrid":
        nodes = [0.0, r1]
        dr = r1
        while nodes[-1] < r_dom:
            dr = min(dr * ratio, dr_max)
            nodes.append(nodes[-1] + dr)
        nodes[-1] = r_dom
        if nodes[-1] - nodes[-2] < 0.3 * dr:
            del nodes[-2]
        return cls(np.array(nodes), spacing="graded", r1=r1, ratio=ratio, dr_max=dr_max)

    @property
    def r_dom(self) -> float:
        return float(self.nodes[-1])

    def refined(self) -> "RadialGrid":
        """Grid with roughly half the spacing everywhere."""
        if self.spacing == "graded":
            q = math.sqrt(self.ratio)
            return RadialGrid.graded(self.r_dom, self.r1 / (1 + q), q, self.dr_max / 2)
        return RadialGrid.uniform(self.r_dom, 2 * (len(self.nodes) - 1))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "spacing": self.spacing,
            "r_dom": self.r_dom,
            "points": len(self.nodes),
            "r1": float(self.nodes[1]),
            "ratio": self.ratio,
            "dr_max": self.dr_max,
        }


@dataclass(frozen=True, eq=False)
class RadialField:
    """A radial PDE state h(t, r), or v(s, rho) in self-similar variables."""

    time: float
    grid: RadialGrid
    values: np.ndarray
    origin_bc: OriginBC = OriginBC.DIRICHLET_ZERO

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", values)
        if values.shape != self.grid.nodes.shape:
            raise RangeError("field values must match the grid")
        if not np.all(np.isfinite(values)):
            raise NonFiniteState(f"non-finite field at t = {self.time}")
        if np.any(values < -math.pi) or np.any(values > 2 * math.pi):
            raise DomainViolation(f"field left [-pi, 2pi] at t = {self.time}")
        target = self.origin_bc.origin_value
        if target is not None and abs(values[0] - target) > 1e-8:
            raise DomainViolation(
                f"origin value {values[0]} inconsistent with {self.origin_bc.value}"
            )

    @property
    def r(self) -> np.ndarray:
        return self.grid.nodes

    def with_values(self, time: float, values: np.ndarray) -> "RadialField":
        return RadialField(time, self.grid, values, self.origin_bc)


@dataclass(frozen=True)
class SimConfig:
    """Time-stepping configuration for the radial heat flow.

    Attributes:
        d: Dimension.
        dt: Time step, or the factor c of dt = c*t when dt_mode is proportional.
        theta: Implicitness of the diffusion (0.5 is Crank-Nicolson).
        t_span: (t_start, t_end).
        nonlinearity: "full_sine" or "linearized_Valpha".
        delta_start: Launch time for singular data.
        dt_mode: "fixed" or "proportional".
        snapshot_every: Keep every n-th step (the final state is always kept).
        snapshot_times: Explicit snapshot times; overrides snapshot_every.
        newton_sweeps: Newton iterations per implicit step.
        startup_steps: Leading steps taken with theta = 1.
        stepper: "imex" or "explicit".
        outer_bc: "zero_flux" or "dirichlet".
    """

    d: int
    dt: float = 1e-3
    theta: float = 0.5
    t_span: Tuple[float, float] = (0.0, 1.0)
    nonlinearity: str = "full_sine"
    delta_start: float = 1e-3
    dt_mode: str = "fixed"
    snapshot_every: int = 10
    snapshot_times: Optional[Tuple[float, ...]] = None
    newton_sweeps: int = 1
    startup_steps: int = 2
    stepper: str = "imex"
    outer_bc: str = "zero_flux"

    def __post_init__(self):
        if self.dt <= 0:
            raise ConfigError(f"dt must be positive, got {self.dt}")
        if not 0.5 <= self.theta <= 1.0:
            raise ConfigError(f"theta must lie in [0.5, 1], got {self.theta}")
        if self.t_span[1] <= self.t_span[0]:
            raise ConfigError(f"empty time span {self.t_span}")
        if self.nonlinearity not in ("full_sine", "linearized_Valpha"):
            raise ConfigError(f"unknown nonlinearity {self.nonlinearity!r}")
        if self.dt_mode not in ("fixed", "proportional"):
            raise ConfigError(f"unknown dt_mode {self.dt_mode!r}")
        if self.stepper not in ("imex", "explicit"):
            raise ConfigError(f"unknown stepper {self.stepper!r}")
        if self.outer_bc not in ("zero_flux", "dirichlet"):
            raise ConfigError(f"unknown outer_bc {self.outer_bc!r}")
        if self.newton_sweeps < 1 or self.snapshot_every < 1:
            raise ConfigError("newton_sweeps and snapshot_every must be >= 1")

    def step_size(self, t: float) -> float:
        if self.dt_mode == "proportional":
            return self.dt * t
        return self.dt

    def to_dict(self) -> Dict[str, Any]:
        return {
            "d": self.d,
            "dt": self.dt,
            "theta": self.theta,
            "t_span": list(self.t_span),
            "nonlinearity": self.nonlinearity,
            "delta_start": self.delta_start,
            "dt_mode": self.dt_mode,
            "newton_sweeps": self.newton_sweeps,
            "startup_steps": self.startup_steps,
            "stepper": self.stepper,
            "outer_bc": self.outer_bc,
        }


@dataclass(frozen=True, eq=False)
class Run:
    """An evolution: snapshots in time order with per-snapshot diagnostics.

    Attributes:
        snapshots: RadialFields, first one the initial state.
        diagnostics: One dict of monitor values per snapshot.
        config: The stepping configuration.
        label: Free-form run name used in exports.
        profile: Reference expander profile, when the run follows one.
        summary: Scalar results attached after the run.
    """

    snapshots: Tuple[RadialField, ...]
    diagnostics: Tuple[Dict[str, float], ...]
    config: SimConfig
    label: str = "run"
    profile: Optional[Profile] = None
    summary: Dict[str, float] = field(default_factory=dict)

    @property
    def grid(self) -> RadialGrid:
        return self.snapshots[0].grid

    @property
    def times(self) -> np.ndarray:
        return np.array([s.time for s in self.snapshots])

    @property
    def values(self) -> np.ndarray:
        """Array of shape (snapshots, grid points)."""
        return np.vstack([s.values for s in self.snapshots])

    @property
    def final(self) -> RadialField:
        return self.snapshots[-1]


@dataclass(frozen=True)
class SupersolutionParams:
    """Parameters of the barrier u+ = eta*w + (M + A/rho^2)*phi(e^{s/2} rho).

    Attributes:
        eta: Weight of the positive solution w.
        M: Far-field amplitude.
        A: Near-origin correction amplitude.
        R: Cutoff radius (phi = 0 on [0, R], 1 on [2R, inf)).
        s0: Final self-similar time; barriers are used for s < s0.
        cutoff: Vectorized x -> (phi, phi', phi'').
    """

    eta: float
    M: float
    A: float
    R: float
    s0: float
    cutoff: Callable[[np.ndarray], Tuple[np.ndarray, np.ndarray, np.ndarray]]

    def __post_init__(self):
        if self.eta <= 0:
            raise RangeError(f"eta must be positive, got {self.eta}")
        if self.R <= 0:
            raise RangeError(f"cutoff radius must be positive, got {self.R}")


@dataclass(frozen=True)
class TestFunctionPair:
    """Space-time test functions for the local energy inequality.

    tau(t, r) returns (tau, tau_t, tau_r) and radial(t, r) returns (g, g_r) for
    the radial vector field psi^l = g(t, r) x_l / r. Both vanish outside
    support = (t_lo, t_hi, r_lo, r_hi).
    """

    __test__ = False

    tau: Callable[[np.ndarray, np.ndarray], Tuple[np.ndarray, ...]]
    radial: Callable[[np.ndarray, np.ndarray], Tuple[np.ndarray, np.ndarray]]
    support: Tuple[float, float, float, float]


@dataclass(frozen=True, eq=False)
class EquivariantPair:
    """Corotational Ginzburg-Landau state u = (v, w x/|x|) on a radial grid."""

    time: float
    grid: RadialGrid
    v: np.ndarray
    w: np.ndarray
    epsilon: float

    def __post_init__(self):
        v = np.asarray(self.v, dtype=float)
        w = np.asarray(self.w, dtype=float)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "w", w)
        if v.shape != self.grid.nodes.shape or w.shape != v.shape:
            raise RangeError("component arrays must match the grid")
        if not (np.all(np.isfinite(v)) and np.all(np.isfinite(w))):
            raise NonFiniteState(f"non-finite GL state at t = {self.time}")
        if abs(w[0]) > 1e-12:
            raise DomainViolation("the equivariant component must vanish at r = 0")

    @property
    def modulus_sq(self) -> np.ndarray:
        return self.v**2 + self.w**2

    @property
    def angle(self) -> np.ndarray:
        return np.arctan2(self.w, self.v)


@dataclass(frozen=True)
class GLConfig:
    """Configuration of a Ginzburg-Landau selection study."""

    d: int
    epsilon_sequence: Tuple[float, ...]
    grid: RadialGrid
    dt: float = 2e-4
    t_span: Tuple[float, float] = (0.0, 0.05)
    snapshot_every: int = 25

    def __post_init__(self):
        eps = np.asarray(self.epsilon_sequence, dtype=float)
        if len(eps) == 0 or np.any(eps <= 0):
            raise ConfigError("epsilon_sequence must hold positive values")
        if np.any(np.diff(eps) >= 0):
            raise ConfigError("epsilon_sequence must be strictly decreasing")
        if eps[-1] <= self.grid.nodes[1]:
            raise ConfigError("smallest epsilon must exceed the first grid spacing")
        if self.dt <= 0 or self.t_span[1] <= self.t_span[0]:
            raise ConfigError("dt and t_span must describe a forward run")


@dataclass
class RunManifest:
    """Reproducibility record written next to every command's artifacts.

    Derived constants are stored as {"value": ..., "tol": ...} so that each
    carries the tolerance it was computed at.
    """

    command: str
    parameters: Dict[str, Any] = field(default_factory=dict)
    derived_constants: Dict[str, Dict[str, Any]] = field(default_factory=dict)
    artifacts: List[str] = field(default_factory=list)
    wall_time: float = 0.0
    schema: int = SCHEMA_VERSION

    def add_constant(self, name: str, value: Any, tol: float) -> None:
        self.derived_constants[name] = {"value": value, "tol": tol}

    def to_dict(self) -> Dict[str, Any]:
        return {
            "schema": self.schema,
            "command": self.command,
            "parameters": self.parameters,
            "derived_constants": self.derived_constants,
            "artifacts": list(self.artifacts),
            "wall_time": self.wall_time,
        }
