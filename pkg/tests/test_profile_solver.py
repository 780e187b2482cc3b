"""Tests for profile shooting, branch scans and the critical parameters."""

import math
import unittest

import numpy as np
import pytest

from expanderlab import profile_solver
from expanderlab.models import (
    NoBracket,
    Pole,
    ProfileParams,
    RangeError,
    VariationKind,
)
from expanderlab.profile_solver import (
    EQUATOR,
    cached_profile,
    critical_params,
    crossing_radius_bound,
    kappa_threshold,
    phi_limit_sign_changes,
    scan_branches,
    scan_grid,
    shoot_for_limit,
    solve_profile,
    solve_variation_phi,
    solve_variation_underline,
    solve_v_upper,
    solve_w,
    solve_w_upper,
    solve_y,
    south_profile,
    weight_z,
)

pytestmark = pytest.mark.area_profile_solver


class TestProfileParams(unittest.TestCase):
    """Test parameter validation of the shooting solve."""

    def test_rejects_out_of_range_values(self):
        bad = [
            {"d": 2, "alpha": 1.0},
            {"d": 3.5, "alpha": 1.0},
            {"d": 3, "alpha": -0.1},
            {"d": 3, "alpha": math.inf},
            {"d": 3, "alpha": 1.0, "rho_max": 5.0},
            {"d": 3, "alpha": 1.0, "tol": 1e-3},
            {"d": 3, "alpha": 1.0, "rho0": 0.2},
            {"d": 3, "alpha": 1.0, "order": 7},
        ]
        for kwargs in bad:
            with self.subTest(kwargs=kwargs):
                with self.assertRaises(RangeError):
                    ProfileParams(**kwargs)

    def test_series_order_switches_for_steep_launch(self):
        self.assertEqual(ProfileParams(d=3, alpha=2.0).series_order, 3)
        self.assertEqual(ProfileParams(d=3, alpha=8.0).series_order, 5)
        self.assertEqual(ProfileParams(d=3, alpha=8.0, order=3).series_order, 3)


@pytest.mark.type_basic
class TestSolveProfile:
    def test_zero_slope_is_stationary(self):
        profile = solve_profile(ProfileParams(d=4, alpha=0.0))
        assert float(np.max(np.abs(profile.psi))) <= 1e-10
        assert abs(profile.psi_inf) <= 1e-10
        assert profile.crossings_of_equator == 0

    def test_small_slope_stays_below_equator(self, profile_d3):
        assert 0 < profile_d3.psi_inf < EQUATOR
        assert profile_d3.crossings_of_equator == 0
        assert profile_d3.psi_inf_error < 1e-6

    def test_south_is_reflection(self, profile_d3):
        south = solve_profile(ProfileParams(d=3, alpha=0.5, pole=Pole.SOUTH))
        np.testing.assert_allclose(south.psi, math.pi - profile_d3.psi, atol=1e-14)
        assert south.psi_inf == pytest.approx(math.pi - profile_d3.psi_inf, abs=1e-14)

    def test_evaluate_covers_all_radii(self, profile_d3):
        rho = np.array([0.0, 1e-5, 1.0, 10.0, 60.0])
        psi, dpsi = profile_d3.evaluate(rho)
        assert psi[0] == 0.0 and dpsi[0] == pytest.approx(0.5)
        assert psi[-1] == pytest.approx(profile_d3.psi_inf, abs=1e-2)
        assert np.all(np.isfinite(dpsi))

    def test_evaluate_rejects_negative_radius(self, profile_d3):
        with pytest.raises(RangeError):
            profile_d3.evaluate(-1.0)

    def test_cache_returns_same_object(self):
        assert cached_profile(3, 0.25) is cached_profile(3, 0.25)


@pytest.mark.type_basic
class TestScanGrid:
    def test_includes_zero(self):
        alphas = scan_grid((0.0, 100.0), 200)
        assert alphas[0] == 0.0 and alphas[-1] == pytest.approx(100.0)
        assert len(alphas) == 200 and np.all(np.diff(alphas) > 0)

    @pytest.mark.parametrize(
        "alpha_range,n",
        [
            pytest.param((1.0, 1.0), 10, id="empty"),
            pytest.param((-1.0, 1.0), 10, id="negative"),
            pytest.param((0.0, 1.0), 1, id="one-point"),
        ],
    )
    def test_rejects_bad_range(self, alpha_range, n):
        with pytest.raises(RangeError):
            scan_grid(alpha_range, n)


@pytest.mark.slow
@pytest.mark.type_acceptance
class TestBranchDichotomy:
    def test_d7_limits_increase_below_equator(self):
        scan = scan_branches(7, (0.0, 100.0), 200)
        assert np.all(np.diff(scan.limits) > 0)
        assert np.all(scan.limits < EQUATOR)
        assert scan.limits.max() > EQUATOR - 0.05

    def test_d3_limits_oscillate_about_equator(self):
        scan = scan_branches(3, (0.0, 100.0), 200)
        assert scan.equator_sign_changes() >= 2

    def test_d7_has_no_critical_slopes(self):
        crit = critical_params(7)
        assert math.isinf(crit.alpha0) and math.isnan(crit.ell_star)
        assert not crit.finite


@pytest.mark.slow
@pytest.mark.type_acceptance
class TestCriticalParams:
    @pytest.mark.parametrize("d", [3, 4, 5, 6])
    def test_ordering(self, d):
        crit = critical_params(d)
        assert crit.alpha0 < crit.alpha_star
        assert crit.ell_star > EQUATOR
        assert crit.delta_star > 0

    @pytest.mark.parametrize("d", [3, 4, 5, 6])
    def test_stable_under_longer_domain(self, d):
        short = critical_params(d, rho_max=30.0)
        long = critical_params(d, rho_max=50.0)
        for field in ("alpha0", "alpha_star", "ell_star", "delta_star"):
            gap = abs(getattr(short, field) - getattr(long, field))
            assert gap < 1e-6, f"{field} moved by {gap:.2e} for d={d}"

    def test_matches_calibrated_values(self, critical_d3, constants):
        assert critical_d3.alpha0 == pytest.approx(constants("alpha0_d3"), abs=1e-6)
        assert critical_d3.ell_star == pytest.approx(
            constants("ell_star_d3"), abs=1e-6
        )


@pytest.mark.type_property
class TestVariations:
    @pytest.mark.parametrize(
        "d,alpha",
        [(3, 0.1), (3, 0.3), (4, 0.2), (5, 0.25), (6, 0.15)],
    )
    def test_phi_matches_finite_differences(self, d, alpha):
        h = 1e-5
        rho = np.array([1.0, 5.0, 20.0])
        params = {"d": d, "tol": 1e-12}
        plus, _ = solve_profile(ProfileParams(alpha=alpha + h, **params)).evaluate(rho)
        minus, _ = solve_profile(ProfileParams(alpha=alpha - h, **params)).evaluate(rho)
        centre = solve_profile(ProfileParams(alpha=alpha, **params))
        phi = solve_variation_phi(centre).evaluate(rho)
        difference = (plus - minus) / (2 * h)
        np.testing.assert_allclose(phi, difference, rtol=1e-4)

    def test_phi_positive_below_alpha0(self, profile_d3):
        phi = solve_variation_phi(profile_d3)
        assert phi.positive and phi.limit > 0

    def test_underline_phi_solves_shifted_equation(self, profile_d3):
        underline = solve_variation_underline(profile_d3)
        assert underline.residual < 1e-8

    def test_underline_phi_needs_slope(self):
        with pytest.raises(RangeError):
            solve_variation_underline(solve_profile(ProfileParams(d=3, alpha=0.0)))

    def test_w_rejects_negative_kappa(self, profile_d3):
        with pytest.raises(RangeError):
            solve_w(profile_d3, -1.0)

    def test_w_positive_below_threshold(self, profile_d3):
        lo, hi = kappa_threshold(profile_d3)
        assert 0 <= lo < hi
        w = solve_w(profile_d3, 0.5 * lo)
        assert w.positive and w.limit > 0 and w.parameter == 0.5 * lo

    def test_weight_is_continuous(self):
        for rho, expected in ((1.0, 1.0), (2.0, 4.0)):
            below, above = weight_z([rho - 1e-9, rho + 1e-9])
            assert below == pytest.approx(expected, abs=1e-7)
            assert above == pytest.approx(expected, abs=1e-7)

    def test_y_equation_decays_like_inverse_radius(self, profile_d3):
        y = solve_y(profile_d3)
        assert y.kind is VariationKind.Y
        assert math.isfinite(y.limit)
        far = y.evaluate(np.array([60.0, 120.0]))
        assert far[0] == pytest.approx(2 * far[1], rel=1e-12)

    def test_barrier_components_reuse_the_y_equation(self, profile_d3):
        y = solve_y(profile_d3)
        upper = solve_v_upper(profile_d3)
        lower = solve_w_upper(profile_d3)
        assert upper.kind is VariationKind.V_UPPER
        assert lower.kind is VariationKind.W_UPPER
        np.testing.assert_array_equal(upper.values, y.values)
        np.testing.assert_array_equal(lower.values, y.values)

    def test_no_exceptional_slopes_below_alpha0(self):
        assert phi_limit_sign_changes(3, [0.1, 0.2, 0.3, 0.4]) == []

    def test_sub_equator_profiles_have_no_crossing_radius(self):
        assert crossing_radius_bound(3, [0.1, 0.25, 0.5]) == 0.0


@pytest.mark.type_basic
class TestShooting:
    @pytest.mark.parametrize(
        "ell,branch",
        [
            pytest.param(0.0, 0, id="zero-limit"),
            pytest.param(math.pi, 0, id="pi-limit"),
            pytest.param(1.0, 2, id="bad-branch"),
        ],
    )
    def test_rejects_bad_targets(self, ell, branch):
        with pytest.raises(RangeError):
            shoot_for_limit(3, ell, branch)

    def test_south_needs_limit_below_equator(self):
        with pytest.raises(RangeError):
            south_profile(3, EQUATOR + 0.1)

    @pytest.mark.slow
    def test_matches_calibrated_slope(self, constants):
        shot = shoot_for_limit(3, 1.0, 0, tol=1e-9)
        assert abs(shot.psi_inf - 1.0) <= 1e-9
        assert shot.bracket_history[0][0] <= shot.alpha <= shot.bracket_history[0][1]
        assert shot.alpha == pytest.approx(constants("alpha_hat_d3_ell1"), abs=1e-6)

    @pytest.mark.slow
    def test_root_is_polished_with_brent(self, mocker):
        spy = mocker.spy(profile_solver, "brentq")
        shot = shoot_for_limit(3, 1.0, 0, tol=1e-9)
        polish = [c for c in spy.call_args_list if c.args[0].__name__ == "residual"]
        assert len(polish) == 1
        lo, hi = polish[0].args[1:3]
        assert lo <= shot.alpha <= hi
        assert shot.bracket_history[-1] == (lo, hi)

    @pytest.mark.slow
    def test_unreachable_limit(self):
        with pytest.raises(NoBracket):
            shoot_for_limit(3, 2.5, 0)

    @pytest.mark.slow
    @pytest.mark.type_acceptance
    def test_south_profile_crosses_once(self):
        ell = EQUATOR - 0.05
        south = south_profile(3, ell)
        assert south.psi[0] == pytest.approx(math.pi, abs=1e-3)
        assert south.psi_inf == pytest.approx(ell, abs=1e-8)
        assert south.crossings_of_equator == 1

