"""Tests for the Ginzburg-Landau penalized flow and branch selection."""

import math

import numpy as np
import pytest

from expanderlab.gl_regularization import (
    GLStepper,
    gl_energy,
    gl_run,
    gl_select,
    gl_step,
    mollify,
    radial_factor,
)
from expanderlab.models import (
    ConfigError,
    DomainViolation,
    EquivariantPair,
    GLConfig,
    RadialGrid,
)

from .helpers import assert_nonincreasing, assert_sup_close, constant_data

pytestmark = pytest.mark.area_gl_regularization


@pytest.fixture
def gl_grid():
    return RadialGrid.uniform(2.0, 200)


def pair_from_angle(grid, h, epsilon, time=0.0):
    return EquivariantPair(time, grid, np.cos(h), np.sin(h), epsilon)


@pytest.mark.type_basic
class TestRadialFactor:
    def test_sphere_is_fixed(self):
        np.testing.assert_allclose(radial_factor(np.ones(4), 3.0), 1.0, rtol=1e-14)

    def test_origin_of_target_is_left_alone(self):
        assert radial_factor(np.array([0.0]), 0.5)[0] == 1.0

    @pytest.mark.parametrize("a", [0.1, 1.0, 25.0])
    def test_solves_cubic_and_moves_toward_sphere(self, a, rng):
        q2 = rng.uniform(0.01, 2.0, 50)
        lam = radial_factor(q2, a)
        residual = a * q2 * lam**3 + (1.0 - a) * lam - 1.0
        np.testing.assert_allclose(residual, 0.0, atol=1e-10)
        new_q2 = lam**2 * q2
        inside = q2 < 1.0
        assert np.all(new_q2[inside] >= q2[inside])
        assert np.all(new_q2[inside] <= 1.0 + 1e-12)
        assert np.all(new_q2[~inside] <= q2[~inside])
        assert np.all(new_q2[~inside] >= 1.0 - 1e-12)


@pytest.mark.type_basic
class TestEquivariantPair:
    def test_rejects_nonzero_origin_component(self, gl_grid):
        w = np.full(len(gl_grid.nodes), 0.1)
        with pytest.raises(DomainViolation):
            EquivariantPair(0.0, gl_grid, np.ones_like(w), w, 0.1)

    def test_angle_recovers_data(self, gl_grid):
        h = 1.2 * np.tanh(gl_grid.nodes)
        state = pair_from_angle(gl_grid, h, 0.1)
        np.testing.assert_allclose(state.angle, h, atol=1e-14)
        np.testing.assert_allclose(state.modulus_sq, 1.0, atol=1e-14)

    @pytest.mark.parametrize(
        "eps",
        [
            pytest.param((0.01, 0.02), id="increasing"),
            pytest.param((), id="empty"),
            pytest.param((0.02, -0.01), id="negative"),
            pytest.param((0.02, 0.005), id="below-grid-spacing"),
        ],
    )
    def test_config_validation(self, gl_grid, eps):
        with pytest.raises(ConfigError):
            GLConfig(d=3, epsilon_sequence=eps, grid=gl_grid)


@pytest.mark.type_property
class TestGLStep:
    def test_north_pole_is_stationary(self, gl_grid):
        state = pair_from_angle(gl_grid, np.zeros(len(gl_grid.nodes)), 0.05)
        stepper = GLStepper(gl_grid, 5, 1e-3)
        for _ in range(10):
            state = stepper.advance(state)
        assert_sup_close(state.v, 1.0, 1e-14, "v")
        assert_sup_close(state.w, 0.0, 1e-14, "w")
        assert state.time == pytest.approx(0.01)

    def test_stays_in_unit_ball(self, gl_grid):
        r = gl_grid.nodes
        state = pair_from_angle(gl_grid, 2.5 * np.tanh(r / 0.1), 0.05)
        for _ in range(50):
            state = gl_step(state, 1e-3, 3)
            assert np.max(state.modulus_sq) <= (1 + 1e-8) ** 2
            assert state.w[0] == 0.0

    def test_energy_is_nonincreasing(self, gl_grid):
        r = gl_grid.nodes
        state = pair_from_angle(gl_grid, 1.5 * r**2 * np.exp(-(r**2)), 0.1)
        stepper = GLStepper(gl_grid, 3, 1e-3)
        energies = [gl_energy(state, 3)]
        for _ in range(30):
            state = stepper.advance(state)
            energies.append(gl_energy(state, 3))
        assert_nonincreasing(energies, 1e-3 * energies[0], "GL energy")
        assert energies[-1] < energies[0]


@pytest.mark.type_basic
class TestGLRun:
    def test_mollify_ramps_inside_epsilon(self):
        smoothed = mollify(constant_data(1.2), 0.1)
        r = np.array([0.0, 0.05, 0.1, 0.5])
        np.testing.assert_allclose(smoothed(r), [0.0, 0.6, 1.2, 1.2])

    def test_zero_data_has_zero_limit(self, gl_grid):
        config = GLConfig(
            d=3, epsilon_sequence=(0.1,), grid=gl_grid, dt=1e-3, t_span=(0.0, 0.01)
        )
        run = gl_run(constant_data(0.0), 0.1, config)
        np.testing.assert_array_equal(run["angle"], 0.0)
        assert run["min_v"] == pytest.approx(1.0, abs=1e-14)
        assert run["sphere_defect"] <= 1e-14
        assert run["snapshots"][-1].time == pytest.approx(0.01)


@pytest.mark.type_basic
class TestSelectionReport:
    @pytest.fixture
    def zero_config(self, gl_grid):
        return GLConfig(
            d=3, epsilon_sequence=(0.1,), grid=gl_grid, dt=1e-3, t_span=(0.0, 0.01)
        )

    def reference(self, grid, offset, error):
        return {"values": np.full(len(grid.nodes), offset), "error": error}

    @pytest.mark.parametrize(
        "offset, error, expected",
        [
            pytest.param(0.001, 1e-3, True, id="inside"),
            pytest.param(0.01, 1e-3, False, id="outside"),
            pytest.param(0.0, math.nan, None, id="unrefined"),
        ],
    )
    def test_distance_against_reference_error(
        self, zero_config, offset, error, expected
    ):
        reference = self.reference(zero_config.grid, offset, error)
        report = gl_select(constant_data(0.0), zero_config, reference=reference)
        assert report["rows"][0]["distance"] == pytest.approx(offset)
        assert report["within_reference_error"] is expected


@pytest.mark.slow
@pytest.mark.type_acceptance
class TestSelection:
    def test_north_branch_is_selected(self):
        ell = math.pi / 2 - 0.1
        config = GLConfig(
            d=5,
            epsilon_sequence=(0.04, 0.02, 0.01),
            grid=RadialGrid.graded(3.0),
            dt=2e-4,
            t_span=(0.0, 0.05),
        )
        report = gl_select(constant_data(ell), config, refine_reference=True)
        assert report["monotone"]
        assert report["within_reference_error"]
        kappa = math.cos(ell)
        for row in report["rows"]:
            assert row["branch"] == "north"
            assert row["min_v"] >= kappa - 1e-3
            assert row["max_modulus_sq"] <= (1 + 1e-8) ** 2
            assert math.isfinite(row["budget"])
