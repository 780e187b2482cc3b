"""Ginzburg-Landau penalization of the corotational heat flow.

The map u = (v, w x/|x|) into the unit ball of R^{d+1} evolves by

    u_t - Delta u + eps^{-2} (|u|^2 - 1) u = 0,

which for the two components reads

    v_t = v_rr + (d-1)/r v_r - eps^{-2}(v^2 + w^2 - 1) v
    w_t = w_rr + (d-1)/r w_r - (d-1)/r^2 w - eps^{-2}(v^2 + w^2 - 1) w

with v_r = 0 and w = 0 at the origin. Each step diffuses both components by
backward Euler and then solves the stiff penalization exactly in the radial
direction, node by node. As eps -> 0 the angle atan2(w, v) selects the North
solution of the heat flow.
"""

import logging
import math
from dataclasses import replace
from typing import Callable, Dict, List, Optional

import numpy as np
from scipy.integrate import trapezoid

from .models import (
    EquivariantPair,
    GLConfig,
    NewtonDivergence,
    Pole,
    RadialGrid,
    SimConfig,
)
from .pde_simulator import (
    RadialOperator,
    _solve_tridiagonal,
    branch_profile,
    evolve,
    make_branch_data,
    resolution_gap,
)
from .utils import loglog_fit, parallel_map, sphere_area

logger = logging.getLogger("expanderlab")

NEWTON_MAX_ITER = 60
NEWTON_TOL = 1e-14
ORIGIN_REGION = 0.5


class GLStepper:
    """Backward-Euler diffusion matrices for one grid, dimension and step."""

    def __init__(self, grid: RadialGrid, d: int, dt: float):
        r = grid.nodes
        self.grid, self.d, self.dt = grid, d, dt
        self.operator = op = RadialOperator(grid, d)
        self.origin_rate = op.conductance[0] / ((0.5 * r[1]) ** d / d)
        self.coef = np.zeros_like(r)
        self.coef[1:] = (d - 1) / r[1:] ** 2

        n = len(r)
        base = np.zeros((3, n))
        base[0, 1:] = -dt * op.upper[:-1]
        base[1] = 1.0 - dt * op.diag
        base[2, :-1] = -dt * op.lower[1:]

        self.ab_v = base.copy()
        self.ab_v[1, 0] = 1.0 + dt * self.origin_rate
        self.ab_v[0, 1] = -dt * self.origin_rate

        self.ab_w = base.copy()
        self.ab_w[1] += dt * self.coef
        self.ab_w[1, 0] = 1.0
        self.ab_w[0, 1] = 0.0

    def laplacian_v(self, v: np.ndarray) -> np.ndarray:
        out = self.operator.apply(v)
        out[0] = self.origin_rate * (v[1] - v[0])
        return out

    def laplacian_w(self, w: np.ndarray) -> np.ndarray:
        out = self.operator.apply(w) - self.coef * w
        out[0] = 0.0
        return out

    def diffuse(self, v: np.ndarray, w: np.ndarray):
        rhs_v = self.dt * self.laplacian_v(v)
        rhs_w = self.dt * self.laplacian_w(w)
        rhs_w[0] = -w[0]
        return v + _solve_tridiagonal(self.ab_v, rhs_v), w + _solve_tridiagonal(
            self.ab_w, rhs_w
        )

    def advance(self, state: EquivariantPair) -> EquivariantPair:
        v, w = self.diffuse(state.v, state.w)
        scale = radial_factor(v**2 + w**2, self.dt / state.epsilon**2)
        w = scale * w
        w[0] = 0.0
        return EquivariantPair(
            state.time + self.dt, state.grid, scale * v, w, state.epsilon
        )


def radial_factor(q2: np.ndarray, a: float) -> np.ndarray:
    """Positive root lambda of a q^2 lambda^3 + (1 - a) lambda - 1 = 0 per node.

    This is the backward-Euler step of u_t = -eps^{-2}(|u|^2 - 1)u along u,
    with a = dt/eps^2. Newton starts from the exact logistic flow of |u|^2
    when that seed lies right of the root, and from max(1, 1/q) otherwise;
    the cubic is convex there, so the iterates decrease monotonically.

    Raises:
        NewtonDivergence: The iteration does not converge.
    """
    q2 = np.asarray(q2, dtype=float)
    lam = np.ones_like(q2)
    live = q2 > 1e-300
    if not np.any(live):
        return lam
    q2l = q2[live]

    def cubic(x):
        return a * q2l * x**3 + (1.0 - a) * x - 1.0

    logistic = 1.0 / (1.0 + (1.0 / q2l - 1.0) * math.exp(-2.0 * a))
    seed = np.sqrt(logistic / q2l)
    bound = np.maximum(1.0, 1.0 / np.sqrt(q2l))
    x = np.where(cubic(seed) >= 0, seed, bound)
    for _ in range(NEWTON_MAX_ITER):
        slope = 3.0 * a * q2l * x**2 + (1.0 - a)
        update = cubic(x) / slope
        x = x - update
        if not np.all(np.isfinite(x)) or np.any(x <= 0):
            raise NewtonDivergence(f"radial Newton left (0, inf) at dt/eps^2={a:.3g}")
        if np.max(np.abs(update) / x) <= NEWTON_TOL:
            break
    else:
        raise NewtonDivergence(
            f"radial Newton did not converge in {NEWTON_MAX_ITER} iterations "
            f"at dt/eps^2={a:.3g}"
        )
    lam[live] = x
    return lam


def gl_step(state: EquivariantPair, dt: float, d: int) -> EquivariantPair:
    """One step of the penalized flow (see GLStepper)."""
    return GLStepper(state.grid, d, dt).advance(state)


def gl_energy(state: EquivariantPair, d: int) -> float:
    """Ginzburg-Landau energy of the state.

    |S^{d-1}| int (v_r^2 + w_r^2 + (d-1) w^2/r^2 + (1 - |u|^2)^2/(2 eps^2)) r^{d-1} dr,
    by the trapezoid rule.
    """
    r = state.grid.nodes
    v_r = np.gradient(state.v, r)
    w_r = np.gradient(state.w, r)
    safe = np.where(r > 0, r, 1.0)
    angular = np.where(r > 0, (d - 1) * state.w**2 / safe**2, 0.0)
    potential = (1.0 - state.modulus_sq) ** 2 / (2.0 * state.epsilon**2)
    density = v_r**2 + w_r**2 + angular + potential
    return sphere_area(d) * float(trapezoid(density * r ** (d - 1), r))


def mollify(
    h0: Callable[[np.ndarray], np.ndarray], epsilon: float
) -> Callable[[np.ndarray], np.ndarray]:
    """h0 with [0, eps] replaced by the ramp r h0(eps)/eps."""
    edge = float(np.asarray(h0(np.array([epsilon])), dtype=float)[0])

    def smoothed(r):
        r = np.asarray(r, dtype=float)
        return np.where(r < epsilon, r * edge / epsilon, h0(r))

    return smoothed


def gl_run(
    h0: Callable[[np.ndarray], np.ndarray],
    epsilon: float,
    config: GLConfig,
) -> Dict:
    """Evolve mollified data (cos h0, sin h0) for one epsilon.

    Returns a dict with the snapshots (EquivariantPairs), the reconstructed
    angle h at the final time, min v over r <= 0.5, the final sphere defect
    max | |u|^2 - 1 |, the largest |u|^2 seen and the space-time budget
    sum |h_t|^2 over the second half of the run on 0.25 <= r <= 1.
    """
    grid = config.grid
    r = grid.nodes
    t0, t_end = config.t_span
    data = mollify(h0, epsilon)(r)
    state = EquivariantPair(t0, grid, np.cos(data), np.sin(data), epsilon)
    stepper = GLStepper(grid, config.d, config.dt)

    near = r <= ORIGIN_REGION
    band = (r >= 0.25) & (r <= 1.0)
    weight = r[band] ** (config.d - 1)
    budget_start = 0.5 * (t0 + t_end)
    snapshots = [state]
    min_v = float(np.min(state.v[near]))
    max_modulus = float(np.max(state.modulus_sq))
    budget = 0.0
    angle = state.angle
    steps = 0
    while t_end - state.time > 1e-12 * max(1.0, t_end):
        state = stepper.advance(state)
        steps += 1
        new_angle = state.angle
        if state.time > budget_start:
            rate = ((new_angle - angle) / config.dt)[band] ** 2
            budget += config.dt * float(trapezoid(rate * weight, r[band]))
        angle = new_angle
        min_v = min(min_v, float(np.min(state.v[near])))
        max_modulus = max(max_modulus, float(np.max(state.modulus_sq)))
        if steps % config.snapshot_every == 0:
            snapshots.append(state)
    if snapshots[-1] is not state:
        snapshots.append(state)

    logger.debug(
        f"GL eps={epsilon}: {steps} steps, min v={min_v:.4f}, "
        f"max |u|^2={max_modulus:.12f}"
    )
    return {
        "epsilon": epsilon,
        "snapshots": snapshots,
        "angle": state.angle,
        "min_v": min_v,
        "max_modulus_sq": max_modulus,
        "sphere_defect": float(np.max(np.abs(state.modulus_sq - 1.0))),
        "budget": budget,
    }


def north_reference(
    h0: Callable[[np.ndarray], np.ndarray],
    config: GLConfig,
    *,
    delta: float = 1e-4,
    dt_factor: float = 0.02,
    refine: bool = False,
) -> Dict:
    """The heat-flow North solution from h0 at config.t_span[1], on config.grid.

    Launched at t = delta from branch data with ell = h0(0) and stepped with
    dt = dt_factor * t. With refine=True the run is repeated with halved
    spacing and step, and the gap between the two is reported as the
    discretization error.
    """
    ell = float(np.asarray(h0(np.array([0.0])), dtype=float)[0])
    profile = branch_profile(config.d, ell, Pole.NORTH)
    t_end = config.t_span[1]
    sim = SimConfig(
        d=config.d,
        dt=dt_factor,
        dt_mode="proportional",
        t_span=(delta, t_end),
        delta_start=delta,
        snapshot_times=(t_end,),
    )

    def run_on(job):
        grid, sim_config = job
        data = make_branch_data(
            config.d, ell, Pole.NORTH, h0, delta, grid, profile=profile
        )
        return evolve(data, sim_config, label="north_reference", profile=profile)

    jobs = [(config.grid, sim)]
    if refine:
        fine_sim = replace(sim, dt=0.5 * dt_factor)
        jobs.append((config.grid.refined(), fine_sim))
    runs = parallel_map(run_on, jobs)
    reference = {"values": runs[0].final.values, "run": runs[0], "error": math.nan}
    if refine:
        reference["error"] = resolution_gap(runs[0], runs[1])
    return reference


def gl_select(
    h0: Callable[[np.ndarray], np.ndarray],
    config: GLConfig,
    *,
    reference: Optional[Dict] = None,
    refine_reference: bool = False,
) -> Dict:
    """Run every epsilon of the sequence and compare with the North solution.

    Returns:
        A report with per-epsilon rows (distance to the reference at the final
        time, min v near the origin, sphere defect, max |u|^2, budget,
        selected branch), whether the distances decrease along the sequence,
        the fitted epsilon-exponent of the sphere defect, the reference
        discretization error and whether the last distance is within twice
        that error (None when the reference was not refined).
    """
    if reference is None:
        reference = north_reference(h0, config, refine=refine_reference)
    runs = parallel_map(lambda eps: gl_run(h0, eps, config), config.epsilon_sequence)
    near = config.grid.nodes <= ORIGIN_REGION
    rows: List[Dict] = []
    for run in runs:
        final_v = run["snapshots"][-1].v
        rows.append(
            {
                "epsilon": run["epsilon"],
                "distance": float(np.max(np.abs(run["angle"] - reference["values"]))),
                "min_v": run["min_v"],
                "sphere_defect": run["sphere_defect"],
                "max_modulus_sq": run["max_modulus_sq"],
                "budget": run["budget"],
                "branch": "north" if np.min(final_v[near]) > 0 else "south",
            }
        )
    distances = [row["distance"] for row in rows]
    exponent = math.nan
    if len(rows) >= 2:
        eps = np.array([row["epsilon"] for row in rows])
        defects = np.array([row["sphere_defect"] for row in rows])
        if np.all(defects > 0):
            exponent, _, _ = loglog_fit(eps, defects)
    error = reference["error"]
    within = None if math.isnan(error) else bool(distances[-1] <= 2 * error)
    report = {
        "rows": rows,
        "monotone": bool(np.all(np.diff(distances) < 0)),
        "defect_exponent": exponent,
        "reference_error": error,
        "within_reference_error": within,
        "runs": runs,
    }
    logger.debug(f"GL selection distances: {distances}")
    return report
