"""expanderlab - expanding solutions of the corotational harmonic map heat flow.

Shoots self-similar expander profiles, maps their bifurcation structure,
evolves the radial heat flow and its Ginzburg-Landau penalization, and checks
the comparison, energy and barrier properties behind (non)uniqueness.
"""

__version__ = "0.1.0"

from expanderlab.gl_regularization import gl_energy, gl_select, gl_step
from expanderlab.models import (
    CriticalParams,
    EquivariantPair,
    ExpanderLabError,
    GLConfig,
    Pole,
    Profile,
    ProfileParams,
    RadialField,
    RadialGrid,
    Run,
    RunManifest,
    SimConfig,
)
from expanderlab.pde_simulator import evolve, evolve_selfsimilar, step
from expanderlab.profile_solver import (
    critical_params,
    scan_branches,
    shoot_for_limit,
    solve_profile,
)

__all__ = [
    "CriticalParams",
    "EquivariantPair",
    "ExpanderLabError",
    "GLConfig",
    "Pole",
    "Profile",
    "ProfileParams",
    "RadialField",
    "RadialGrid",
    "Run",
    "RunManifest",
    "SimConfig",
    "critical_params",
    "evolve",
    "evolve_selfsimilar",
    "gl_energy",
    "gl_select",
    "gl_step",
    "scan_branches",
    "shoot_for_limit",
    "solve_profile",
    "step",
]
