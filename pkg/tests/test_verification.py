"""Tests for barriers, comparison, the energy inequality and monitors."""

import math
import unittest
from fractions import Fraction

import numpy as np
import pytest

from expanderlab.models import (
    DomainViolation,
    OriginBC,
    Pole,
    RadialField,
    RadialGrid,
    RangeError,
    SimConfig,
    SupersolutionParams,
    UnresolvedRegion,
)
from expanderlab.pde_simulator import evolve, evolve_selfsimilar, make_branch_data
from expanderlab.profile_solver import solve_variation_phi
from expanderlab.verification import (
    barrier_radii,
    barrier_times,
    bump_test_pair,
    check_comparison,
    comparison_suite,
    energy_inequality_check,
    expander_sandwich,
    find_supersolution_params,
    hardy_constant,
    hardy_dichotomy,
    holder_monitor,
    j_nonlinearity,
    ordered_pair,
    regularity_monitors,
    sandwich_violation,
    supersolution_residual,
    theta_functional,
    theta_stability,
)
from expanderlab.utils import smooth_cutoff

from .helpers import constant_data

pytestmark = pytest.mark.area_verification

DELTA = 1e-3


@pytest.fixture(scope="module")
def expander_run(profile_d3, pde_grid):
    """North run from constant data at the limit of profile_d3."""
    ell = profile_d3.psi_inf
    initial = make_branch_data(
        3, ell, Pole.NORTH, constant_data(ell), DELTA, pde_grid, profile=profile_d3
    )
    config = SimConfig(
        d=3,
        dt=0.02,
        dt_mode="proportional",
        t_span=(DELTA, 10 * DELTA),
        snapshot_every=1,
    )
    return evolve(initial, config, label="north", profile=profile_d3)


class TestHardyConstant(unittest.TestCase):
    """Test the exact Hardy constant and the dimension dichotomy."""

    def test_values(self):
        self.assertEqual(hardy_constant(7), Fraction(24, 25))
        self.assertEqual(hardy_constant(6), Fraction(5, 4))
        self.assertEqual(hardy_constant(3), Fraction(8, 1))

    def test_dichotomy_flips_at_seven(self):
        flags = [hardy_dichotomy(d) for d in range(3, 10)]
        self.assertEqual(flags, [False] * 4 + [True] * 3)

    def test_rejects_low_dimension(self):
        with self.assertRaises(RangeError):
            hardy_constant(2)


@pytest.mark.type_basic
class TestNonlinearity:
    def test_matches_direct_formula(self):
        psi = np.linspace(0.1, 1.4, 20)
        u = np.linspace(-0.5, 0.5, 20)
        direct = np.sin(2 * (psi + u)) - np.sin(2 * psi) - 2 * np.cos(2 * psi) * u
        np.testing.assert_allclose(j_nonlinearity(u, psi, 3), direct, atol=1e-14)

    def test_is_quadratic_for_small_perturbations(self):
        psi = np.full(3, 0.7)
        u = np.array([1e-4, 1e-6, 1e-8])
        ratio = j_nonlinearity(u, psi, 3) / u**2
        np.testing.assert_allclose(ratio, -2.0 * np.sin(1.4), rtol=1e-3)


@pytest.mark.type_basic
class TestComparison:
    def test_ordered_pair_is_ordered(self, pde_grid, rng):
        for _ in range(10):
            sub, sup = ordered_pair(pde_grid, rng)
            assert np.all(sub.values <= sup.values)
            assert sub.values[0] == sup.values[0] == 0.0

    def test_identical_runs_do_not_violate(self, pde_grid, rng):
        sub, _ = ordered_pair(pde_grid, rng)
        run = evolve(sub, SimConfig(d=3, dt=1e-3, t_span=(0.0, 0.01)))
        assert check_comparison(run, run) == 0.0

    def test_rejects_unordered_start(self, pde_grid, rng):
        sub, sup = ordered_pair(pde_grid, rng)
        config = SimConfig(d=3, dt=1e-3, t_span=(0.0, 0.005))
        low, high = evolve(sub, config), evolve(sup, config)
        with pytest.raises(RangeError):
            check_comparison(high, low)

    def test_rejects_different_grids(self, rng):
        config = SimConfig(d=3, dt=1e-3, t_span=(0.0, 0.005))
        coarse = RadialGrid.uniform(2.0, 50)
        sub, _ = ordered_pair(coarse, rng)
        fine_sub, _ = ordered_pair(coarse.refined(), rng)
        with pytest.raises(RangeError):
            check_comparison(evolve(sub, config), evolve(fine_sub, config))

    @pytest.mark.slow
    @pytest.mark.type_acceptance
    def test_random_pairs_stay_ordered(self, pde_grid):
        violations = comparison_suite(pde_grid, 3, pairs=20)
        assert len(violations) == 2
        assert max(violations) <= 1e-6


@pytest.mark.type_property
class TestEnergyInequality:
    def test_margin_is_nonnegative_up_to_quadrature(self, expander_run):
        t0, t1 = expander_run.times[0], expander_run.times[-1]
        span = t1 - t0
        support = (t0 + 0.1 * span, t1 - 0.1 * span, 5e-3, 1.0)
        for g in (0.0, 1.0):
            tests = bump_test_pair(support, 1.0, g)
            check = energy_inequality_check(expander_run, tests)
            assert check["normalized_margin"] >= -1e-3
            assert check["margin"] == pytest.approx(check["lhs"] - check["rhs"])

    @pytest.mark.parametrize(
        "support",
        [
            pytest.param((2e-3, 8e-3, 0.0, 1.0), id="below-first-node"),
            pytest.param((2e-3, 8e-3, 0.01, 5.0), id="beyond-domain"),
            pytest.param((0.0, 8e-3, 0.01, 1.0), id="before-run"),
        ],
    )
    def test_unresolved_support(self, expander_run, support):
        with pytest.raises(UnresolvedRegion):
            energy_inequality_check(expander_run, bump_test_pair(support))


@pytest.mark.type_property
class TestMonitors:
    def test_expander_gradients_do_not_grow(self, expander_run):
        monitors = regularity_monitors(expander_run)
        names = {"r_grad", "parabolic_grad", "time_derivative"}
        assert set(monitors["series"]) == names
        assert not monitors["growing"]["r_grad"]
        assert all(math.isfinite(v) for v in monitors["sup"].values())

    def test_holder_exponent_is_near_one(self, expander_run):
        holder = holder_monitor(expander_run, r_window=0.01)
        assert len(holder["times"]) == len(expander_run.snapshots)
        assert np.nanmedian(holder["beta"]) == pytest.approx(1.0, abs=0.2)

    def test_holder_needs_resolved_window(self, expander_run):
        with pytest.raises(UnresolvedRegion):
            holder_monitor(expander_run, r_window=1e-4)


@pytest.mark.type_basic
class TestStabilityChecks:
    def test_vanishes_on_equal_maps(self):
        h = np.linspace(0.0, 1.2, 10)
        np.testing.assert_array_equal(theta_functional(h, h), 0.0)

    def test_rejects_runs_reaching_equator(self, pde_grid, half_pi):
        values = half_pi * np.tanh(pde_grid.nodes / 0.1)
        initial = RadialField(0.0, pde_grid, values, OriginBC.DIRICHLET_ZERO)
        run = evolve(initial, SimConfig(d=3, dt=1e-3, t_span=(0.0, 0.002)))
        with pytest.raises(DomainViolation):
            theta_stability(run, run)

    def test_sandwich_needs_positive_width(self, profile_d3):
        with pytest.raises(RangeError):
            expander_sandwich(profile_d3, profile_d3, None, None, 0.0)

    def test_exact_profile_sits_inside_its_sandwich(self, profile_d3):
        phi = solve_variation_phi(profile_d3)
        sandwich = expander_sandwich(profile_d3, profile_d3, phi, phi, 0.1)

        def initial(rho):
            return profile_d3.evaluate(rho)[0]

        run = evolve_selfsimilar(initial, (0.0, 0.2), profile_d3, ds=0.05)
        assert sandwich_violation(run, sandwich) <= 1e-10

    def test_barrier_times_must_precede_s0(self, profile_d3):
        params = SupersolutionParams(
            eta=1.0, M=1.0, A=1.0, R=1.0, s0=0.0, cutoff=lambda x: smooth_cutoff(x, 1.0)
        )
        with pytest.raises(RangeError):
            supersolution_residual(params, profile_d3, [1.0], [1.0])


@pytest.mark.slow
@pytest.mark.type_acceptance
class TestSupersolution:
    def test_barrier_residuals_have_the_right_sign(self, profile_d3):
        params = find_supersolution_params(profile_d3, M=1.0, R=1.0)
        times, radii = barrier_times(params.s0), barrier_radii(params)
        upper = supersolution_residual(params, profile_d3, times, radii)
        lower = supersolution_residual(params, profile_d3, times, radii, sub=True)
        assert min(float(np.min(r)) for r in upper) >= -1e-8
        assert max(float(np.max(r)) for r in lower) <= 1e-8
        assert params.eta > 0 and params.A > 0
